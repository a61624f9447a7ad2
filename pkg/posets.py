"""
Systems of subsets of L = {0, ..., ell} encoded as bitmasks.

lower / upper closures, minimal and maximal members, the complements
alpha^u = 2^L - lower(alpha) and alpha^l = 2^L - upper(alpha), and the
search for the optimal decomposition system from a unit-ideal oracle.
"""
import logging
from dataclasses import dataclass

from errors import InputError, MathematicalFailure

MAX_GROUND = 20


def mask_of(indices):
    m = 0
    for i in indices:
        if not isinstance(i, int) or isinstance(i, bool) or i < 0:
            raise InputError(f"subset index must be a nonnegative integer, got {i!r}")
        m |= 1 << i
    return m


def indices_of(mask):
    out, i = [], 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def submasks(mask):
    sub = mask
    while True:
        yield sub
        if sub == 0:
            return
        sub = (sub - 1) & mask


def _order(mask):
    return (mask.bit_count(), indices_of(mask))


@dataclass(frozen=True)
class AlphaSystem:
    ell: int
    members: frozenset

    def __post_init__(self):
        if not isinstance(self.ell, int) or self.ell < 0:
            raise InputError(f"ell must be a nonnegative integer, got {self.ell!r}")
        if self.ell + 1 > MAX_GROUND:
            raise InputError(f"index sets are limited to {MAX_GROUND} elements")
        stray = [m for m in self.members if m & ~self.full]
        if stray:
            raise InputError(f"subset {indices_of(stray[0])} is not inside L = 0..{self.ell}")

    @classmethod
    def of(cls, ell, subsets):
        return cls(ell, frozenset(mask_of(s) for s in subsets))

    @classmethod
    def singletons(cls, ell):
        return cls(ell, frozenset(1 << i for i in range(ell + 1)))

    @classmethod
    def pairs(cls, ell):
        return cls(ell, frozenset((1 << i) | (1 << j)
                                  for i in range(ell + 1) for j in range(i + 1, ell + 1)))

    @classmethod
    def power_set(cls, ell):
        return cls(ell, frozenset(range(1 << (ell + 1))))

    @property
    def full(self):
        return (1 << (self.ell + 1)) - 1

    def __contains__(self, mask):
        return mask in self.members

    def __iter__(self):
        return iter(sorted(self.members, key=_order))

    def __len__(self):
        return len(self.members)

    def subsets(self):
        return [indices_of(m) for m in self]

    def with_members(self, members):
        return AlphaSystem(self.ell, frozenset(members))

    def require_decomposition_role(self):
        if not self.members:
            raise InputError("decomposition system must be nonempty")
        if self.full in self.members:
            raise InputError("decomposition system may not contain L itself")

    def require_dual_role(self):
        if self.members == frozenset({0}):
            raise InputError("dual system may not consist of the empty set alone")

    def to_json(self):
        return {"ell": self.ell, "members": self.subsets()}

    @classmethod
    def from_json(cls, obj):
        if not isinstance(obj, dict) or set(obj) != {"ell", "members"}:
            raise InputError(f"alpha system must be {{'ell', 'members'}}, got {obj!r}")
        if not isinstance(obj["members"], list):
            raise InputError("alpha system members must be a list of index lists")
        return cls.of(obj["ell"], obj["members"])


def minimal(a):
    return a.with_members(m for m in a.members
                          if not any(o != m and o & m == o for o in a.members))


def maximal(a):
    return a.with_members(m for m in a.members
                          if not any(o != m and o & m == m for o in a.members))


def lower_closure(a):
    out = set()
    for m in a.members:
        out.update(submasks(m))
    return a.with_members(out)


def upper_closure(a):
    out = set()
    for m in a.members:
        rest = a.full & ~m
        out.update(m | s for s in submasks(rest))
    return a.with_members(out)


def closures(a):
    """(lower, upper, mins, maxs) of a nonempty system."""
    if not a.members:
        raise InputError("closures of an empty system")
    return lower_closure(a), upper_closure(a), minimal(a), maximal(a)


def is_pairwise_disjoint(a):
    ms = list(a.members)
    return all(ms[i] & ms[j] == 0 for i in range(len(ms)) for j in range(i + 1, len(ms)))


def complements_pointwise(a):
    """alpha^u = {J : J - I nonempty for all I}, alpha^l = {J : I - J nonempty for all I}."""
    everything = range(a.full + 1)
    upper = [J for J in everything if all(J & ~I for I in a.members)]
    lower = [J for J in everything if all(I & ~J for I in a.members)]
    return a.with_members(upper), a.with_members(lower)


def complements(a):
    """(alpha^u, alpha^l) by set difference, cross-checked against the pointwise test."""
    if not a.members:
        raise InputError("complements of an empty system")
    everything = set(range(a.full + 1))
    alpha_u = a.with_members(everything - lower_closure(a).members)
    alpha_l = a.with_members(everything - upper_closure(a).members)
    point_u, point_l = complements_pointwise(a)
    if point_u != alpha_u or point_l != alpha_l:
        raise MathematicalFailure("set-difference and pointwise complements disagree")
    return alpha_u, alpha_l


def optimal_alpha(ell, unit_oracle):
    """Min(alpha_P) and Max((alpha_P)^l) where alpha_P = {J : unit_oracle(J)}.

    Subsets are visited by size. Supersets of a known true set are skipped
    during the search and asked afterwards; any false answer there is an
    upward closure violation.
    """
    ground = AlphaSystem(ell, frozenset())
    mins, skipped = [], []
    calls = 0
    for J in sorted(range(ground.full + 1), key=_order):
        below = next((t for t in mins if t & J == t), None)
        if below is not None:
            skipped.append((J, below))
            continue
        calls += 1
        if unit_oracle(J):
            mins.append(J)

    for J, below in skipped:
        calls += 1
        if not unit_oracle(J):
            raise InputError("oracle violates upward closure: true at "
                             f"{indices_of(below)} but false at {indices_of(J)}")

    alpha_opt = ground.with_members(mins)
    if mins:
        _, alpha_l = complements(alpha_opt)
    else:
        alpha_l = AlphaSystem.power_set(ell)
    beta_opt = maximal(alpha_l) if alpha_l.members else alpha_l
    logging.debug(f"optimal_alpha: ell={ell}, {len(mins)} minimal sets, {calls} oracle calls")
    return alpha_opt, beta_opt
