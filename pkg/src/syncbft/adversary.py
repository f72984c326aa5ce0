"""Programmable Byzantine adversary.

Corrupted replicas keep running an honest "shadow" copy of the protocol.
Each round the adversary sees what the shadow would send, plus every
message addressed to a corrupted replica this round (it rushes), and turns
that into the corrupted replica's real outbox.  It can sign only with keys
of replicas it has corrupted.

Strategies are either named (see ``SCRIPTS``) or a list of ``Rule`` objects
of the form (hook, condition, action).
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .crypto import Keyring, Signer
from .wire import (
    CommitCertificate,
    CommitMsg,
    NotifyMsg,
    NotifySummary,
    ProposeMsg,
    ProposeSummary,
    SenderValue,
    StatusMsg,
)

HOOKS = ("on_round_start", "on_deliver", "on_elect")
EQUIVOCATION_VALUES = (b"evil-a", b"evil-b")


class ConfigError(ValueError):
    """Invalid scenario or adversary configuration."""


class CorruptionBudgetExceeded(ConfigError):
    pass


@dataclass(frozen=True)
class Action:
    """One thing a corrupted replica does with its round's outbox.

    ``subset`` is a set of recipient ids; ``values`` maps recipient ids (or
    ``"*"``, ``"odd"``, ``"even"``) to values for equivocation.
    """

    name: str
    subset: Optional[frozenset] = None
    values: Optional[tuple] = None

    def label(self) -> str:
        parts = [self.name]
        if self.subset is not None:
            parts.append("-".join(str(i) for i in sorted(self.subset)))
        if self.values is not None:
            parts.append(",".join(f"{k}={v.decode(errors='replace')}" for k, v in self.values))
        return ":".join(parts)


FOLLOW = Action("follow")
SILENCE = Action("silence")


def fixed_subsets(n: int) -> tuple[frozenset, frozenset]:
    """The two recipient subsets used by the discretized action menu."""
    half = n // 2
    return frozenset(range(half)), frozenset(range(half, n))


def action_menu(n: int) -> list[Action]:
    s1, s2 = fixed_subsets(n)
    return [
        FOLLOW,
        SILENCE,
        Action("silence", subset=s1),
        Action("silence", subset=s2),
        Action("equivocate"),
        Action("fake_terminate", subset=s1),
    ]


class Adversary:
    """Holds corrupted keys and what the corrupted replicas have observed."""

    def __init__(self, n: int, f: int, keyring: Keyring, strategy: "Strategy", seed: int = 0) -> None:
        self.n = n
        self.f = f
        self._keyring = keyring
        self.strategy = strategy
        self.rng = random.Random(seed ^ 0x5EED)
        self.corrupted: list[int] = []
        self._signers: dict[int, Signer] = {}
        self.commits: dict[tuple, dict[int, object]] = {}
        self.notifies: dict[int, dict[int, NotifySummary]] = {}
        self.recent: list = []
        self.knowledge: set = set()
        self.log: list[tuple[int, str, dict]] = []

    def corrupt(self, replica: int, round_no: int = 0) -> None:
        if replica in self._signers:
            return
        if not 0 <= replica < self.n:
            raise ConfigError(f"no such replica {replica}")
        if len(self.corrupted) >= self.f:
            raise CorruptionBudgetExceeded(f"cannot corrupt more than f={self.f} replicas")
        self.corrupted.append(replica)
        self._signers[replica] = self._keyring.signer(replica)
        self.log.append((round_no, "corrupt", {"target": replica}))

    def is_corrupt(self, replica: Optional[int]) -> bool:
        return replica in self._signers

    def signer(self, replica: int) -> Signer:
        s = self._signers.get(replica)
        if s is None:
            raise PermissionError(f"adversary holds no key for honest replica {replica}")
        return s

    # -- observation --------------------------------------------------------

    def observe(self, messages: Iterable[object]) -> None:
        """Record messages seen by corrupted replicas in the current round."""
        self.recent = []
        for msg in messages:
            self.recent.append(msg)
            if isinstance(msg, CommitMsg):
                self.commits.setdefault((msg.slot, msg.k, msg.value), {}).setdefault(msg.signer, msg)
                self.knowledge.add(("c", msg.slot, msg.k, msg.value, msg.signer))
            elif isinstance(msg, NotifyMsg):
                s = msg.summary
                self.notifies.setdefault(s.slot, {}).setdefault(s.signer, s)
                self.knowledge.add(("n", s.slot, s.k, s.value, s.signer))

    def forge_cert(self, slot: int, k: int, value: bytes) -> Optional[CommitCertificate]:
        """A valid commit certificate for (value, k) built from observed and corrupted signatures."""
        entries: dict[int, object] = dict(self.commits.get((slot, k, value), {}))
        for s in self.notifies.get(slot, {}).values():
            if s.value == value and s.k <= k:
                entries.setdefault(s.signer, s)
        for r in self.corrupted:
            if len(entries) > self.f:
                break
            if r not in entries:
                entries[r] = CommitMsg.create(self.signer(r), slot, k, value)
        if len(entries) < self.f + 1:
            return None
        chosen = tuple(entries[i] for i in sorted(entries)[: self.f + 1])
        return CommitCertificate(slot, value, k, chosen)

    # -- outbox transformation ----------------------------------------------

    def apply(self, action: Action, info, me: int, shadow_out: list) -> list:
        handler = ACTIONS.get(action.name)
        if handler is None:
            raise ConfigError(f"unknown action {action.name!r}")
        return handler(self, action, info, me, shadow_out)


def _expand(n: int, dest) -> list[int]:
    if dest is None:
        return list(range(n))
    if isinstance(dest, int):
        return [dest]
    return sorted(dest)


def _value_for(values: Optional[tuple], recipient: int) -> bytes:
    if values is None:
        values = (("odd", EQUIVOCATION_VALUES[0]), ("even", EQUIVOCATION_VALUES[1]))
    table = dict(values)
    if recipient in table:
        return table[recipient]
    key = "odd" if recipient % 2 else "even"
    if key in table:
        return table[key]
    return table["*"]


def _act_follow(adv, action, info, me, out):
    return list(out)


def _act_silence(adv, action, info, me, out):
    if action.subset is None:
        return []
    result = []
    for dest, msg in out:
        targets = [j for j in _expand(adv.n, dest) if j not in action.subset]
        if targets:
            result.append((tuple(targets), msg))
    return result


def rewrite_value(adv: Adversary, me: int, msg, value: bytes):
    """Re-sign ``msg`` as replica ``me`` with a different value, if it carries one of ours."""
    s = adv.signer(me)
    if isinstance(msg, ProposeMsg) and msg.signer == me:
        return ProposeMsg.create(s, msg.slot, msg.summary.k, value, msg.proof)
    if isinstance(msg, ProposeSummary) and msg.signer == me:
        return ProposeSummary.create(s, msg.slot, msg.k, value)
    if isinstance(msg, CommitMsg) and msg.signer == me:
        return CommitMsg.create(s, msg.slot, msg.k, value)
    if isinstance(msg, SenderValue) and msg.signer == me:
        return SenderValue.create(s, msg.slot, value)
    if isinstance(msg, StatusMsg) and msg.signer == me:
        # hide whatever we accepted
        return StatusMsg.create(s, msg.slot, msg.summary.k, None, 0, None)
    if isinstance(msg, NotifyMsg) and msg.signer == me:
        k = msg.summary.k
        cert = adv.forge_cert(msg.slot, k, value)
        if cert is None:
            return None
        return NotifyMsg.create(s, msg.slot, k, value, cert)
    return msg


def _act_equivocate(adv, action, info, me, out):
    result = []
    for dest, msg in out:
        groups: dict[bytes, list[int]] = {}
        for j in _expand(adv.n, dest):
            groups.setdefault(_value_for(action.values, j), []).append(j)
        for value, targets in sorted(groups.items()):
            alt = rewrite_value(adv, me, msg, value)
            if alt is not None:
                result.append((tuple(targets), alt))
    return result


def _act_fake_terminate(adv, action, info, me, out):
    subset = tuple(sorted(action.subset)) if action.subset is not None else tuple(range(adv.n))
    notes = [m for _, m in out if isinstance(m, NotifyMsg)]
    if not notes and info.kind == "notify":
        values = sorted({v for (sl, k, v) in adv.commits if sl == info.slot and k == info.k})
        for v in values + list(EQUIVOCATION_VALUES):
            cert = adv.forge_cert(info.slot, info.k, v)
            if cert is not None:
                notes = [NotifyMsg.create(adv.signer(me), info.slot, info.k, v, cert)]
                break
    return [(subset, m) for m in notes]


def _act_replay(adv, action, info, me, out):
    return list(out) + [(None, m) for m in adv.recent]


ACTIONS: dict[str, Callable] = {
    "follow": _act_follow,
    "silence": _act_silence,
    "equivocate": _act_equivocate,
    "fake_terminate": _act_fake_terminate,
    "replay": _act_replay,
}


# -- strategies ---------------------------------------------------------------


class Strategy:
    """Decides corruptions and per-round actions.  Default: corrupt ``static`` and follow."""

    def __init__(self, static: Iterable[int] = ()) -> None:
        self.static = tuple(static)

    def on_round_start(self, adv: Adversary, info) -> None:
        pass

    def on_elect(self, adv: Adversary, info) -> None:
        pass

    def choose(self, adv: Adversary, info, me: int) -> Action:
        return FOLLOW


class SilentStrategy(Strategy):
    def choose(self, adv, info, me):
        return SILENCE


class RandomStrategy(Strategy):
    """Uniformly random action from the menu, per corrupted replica per round."""

    def __init__(self, static: Iterable[int] = (), menu: Optional[list[Action]] = None,
                 replay: bool = True) -> None:
        super().__init__(static)
        self.menu = menu
        self.replay = replay

    def choose(self, adv, info, me):
        menu = self.menu or action_menu(adv.n)
        if self.replay:
            menu = [*menu, Action("replay")]
        return menu[adv.rng.randrange(len(menu))]


class ScriptedStrategy(Strategy):
    """Actions fed from a fixed table ``{(round, replica): Action}``; used by the enumerator."""

    def __init__(self, static: Iterable[int] = (), table: Optional[dict] = None) -> None:
        super().__init__(static)
        self.table = dict(table or {})

    def choose(self, adv, info, me):
        return self.table.get((info.number, me), FOLLOW)


@dataclass(frozen=True)
class Rule:
    """``hook`` in HOOKS; ``when`` is a conjunction of equality tests over round
    attributes (``round``, ``kind``, ``k``, ``slot``, ``replica``, ``role``,
    ``leader``); ``action`` names an entry of ``ACTIONS`` or ``corrupt``."""

    hook: str
    action: str
    when: tuple = ()
    subset: Optional[frozenset] = None
    values: Optional[tuple] = None
    target: Optional[str] = None

    def matches(self, info, me: Optional[int]) -> bool:
        for key, want in self.when:
            if key == "role":
                got = "leader" if me is not None and me == info.leader else "follower"
            elif key == "replica":
                got = me
            else:
                got = getattr(info, key, None)
            if str(got) != str(want):
                return False
        return True


class RuleStrategy(Strategy):
    def __init__(self, static: Iterable[int] = (), rules: Iterable[Rule] = ()) -> None:
        super().__init__(static)
        self.rules = tuple(rules)

    def _corrupt(self, adv, info, rule: Rule) -> None:
        target = rule.target
        if target == "leader":
            if info.leader is not None:
                adv.corrupt(info.leader, info.number)
        elif target is not None:
            adv.corrupt(int(target), info.number)

    def on_round_start(self, adv, info):
        for rule in self.rules:
            if rule.hook == "on_round_start" and rule.matches(info, None):
                self._corrupt(adv, info, rule)

    def on_elect(self, adv, info):
        for rule in self.rules:
            if rule.hook == "on_elect" and rule.matches(info, info.leader):
                self._corrupt(adv, info, rule)

    def choose(self, adv, info, me):
        for rule in self.rules:
            if rule.hook == "on_deliver" and rule.matches(info, me):
                return Action(rule.action, rule.subset, rule.values)
        return FOLLOW


class CorruptLeaderOnElection(Strategy):
    """Adaptive adversary: corrupts each freshly elected leader while budget lasts,
    then keeps it silent."""

    def on_elect(self, adv, info):
        if info.leader is not None and not adv.is_corrupt(info.leader) and len(adv.corrupted) < adv.f:
            adv.corrupt(info.leader, info.number)

    def choose(self, adv, info, me):
        return SILENCE


def parse_rule(raw: dict, n: int, static: Iterable[int]) -> Rule:
    """Build a rule from a scenario-file table and check it at load time."""
    hook = raw.get("hook", "on_deliver")
    if hook not in HOOKS:
        raise ConfigError(f"unknown hook {hook!r}")
    action = raw.get("action", "follow")
    if action != "corrupt" and action not in ACTIONS:
        raise ConfigError(f"unknown action {action!r}")
    when = raw.get("when", {})
    if not isinstance(when, dict):
        raise ConfigError("rule 'when' must be a table")
    replica = when.get("replica")
    if replica is not None and action != "corrupt" and int(replica) not in set(static):
        raise ConfigError(f"rule acts as replica {replica}, which the adversary does not control")
    subset = raw.get("subset")
    values = raw.get("values")
    if values is not None:
        values = tuple(sorted(((int(k) if str(k).isdigit() else k), v.encode()) for k, v in values.items()))
    target = raw.get("target")
    return Rule(
        hook=hook,
        action=action,
        when=tuple(sorted(when.items())),
        subset=None if subset is None else frozenset(int(x) for x in subset),
        values=values,
        target=None if target is None else str(target),
    )


# -- named scripts ------------------------------------------------------------


def _figure1(static):
    return Figure1Strategy(static or (1, 2))


class Figure1Strategy(Strategy):
    """The worked equivocation example at n=5 with replicas 1 and 2 corrupted.

    Leader 2 sends a red proposal to its accomplice 1 and blue to everyone
    else.  Replica 1 forwards red and commits red, but only towards
    replicas {0, 1, 2}.  Everything else the corrupted pair does is silence.
    """

    def choose(self, adv, info, me):
        if info.k == 1 and info.kind == "propose" and me == 2:
            return Action("equivocate", values=((1, b"red"), ("*", b"blue")))
        if info.k == 1 and info.kind == "commit" and me == 1:
            return Action("only", subset=frozenset({0, 1, 2}))
        return SILENCE


def _act_only(adv, action, info, me, out):
    """Send the shadow's outbox, but only to ``subset``."""
    targets = tuple(sorted(action.subset or ()))
    return [(targets, m) for _, m in out] if targets else []


ACTIONS["only"] = _act_only


def _dual_certificate(static):
    return DualCertificateStrategy(static)


class DualCertificateStrategy(Strategy):
    """Byzantine leader splits honest replicas into two camps with different values;
    corrupted replicas commit both, so certificates for two values exist in
    one iteration while no honest replica commits."""

    def choose(self, adv, info, me):
        if info.kind == "propose" and me == info.leader:
            return Action("equivocate")
        if info.kind == "commit":
            return Action("commit_both")
        if info.kind == "notify":
            return Action("notify_both")
        return FOLLOW


def _act_commit_both(adv, action, info, me, out):
    result = []
    for v in EQUIVOCATION_VALUES:
        result.append((None, CommitMsg.create(adv.signer(me), info.slot, info.k, v)))
    return result


def _act_notify_both(adv, action, info, me, out):
    result = []
    for i, v in enumerate(EQUIVOCATION_VALUES):
        cert = adv.forge_cert(info.slot, info.k, v)
        if cert is not None:
            targets = tuple(j for j in range(adv.n) if j % 2 == (1 - i))
            result.append((targets, NotifyMsg.create(adv.signer(me), info.slot, info.k, v, cert)))
    return result


ACTIONS["commit_both"] = _act_commit_both
ACTIONS["notify_both"] = _act_notify_both


def _equivocating_leaders(static):
    return RuleStrategy(static, [Rule("on_deliver", "equivocate", (("kind", "propose"), ("role", "leader")))])


def _fake_terminate(static):
    return RuleStrategy(static, [Rule("on_deliver", "fake_terminate", (("kind", "notify"),),
                                      subset=frozenset({0}))])


SCRIPTS: dict[str, Callable[[tuple], Strategy]] = {
    "honest": lambda static: Strategy(()),
    "follow": Strategy,
    "silent": SilentStrategy,
    "random": RandomStrategy,
    "equivocate": _equivocating_leaders,
    "fake-terminate": _fake_terminate,
    "dual-certificate": _dual_certificate,
    "figure1": _figure1,
    "adaptive-leader": lambda static: CorruptLeaderOnElection(()),
}


def register_script(name: str, factory: Callable[[tuple], Strategy]) -> None:
    SCRIPTS[name] = factory


def build_strategy(name: Optional[str], static: Iterable[int] = (), rules: Iterable[dict] = (),
                   n: int = 0) -> Strategy:
    static = tuple(static)
    rules = list(rules)
    if rules:
        return RuleStrategy(static, [parse_rule(r, n, static) for r in rules])
    if name is None:
        return Strategy(static)
    factory = SCRIPTS.get(name)
    if factory is None:
        raise ConfigError(f"unknown adversary script {name!r}; known: {', '.join(sorted(SCRIPTS))}")
    return factory(static)
