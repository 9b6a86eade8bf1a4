"""Mixed *-moment hierarchy of the multiplicative flow.

Traces of words in b and b* satisfy a closed system of ODEs in the
flow time r: the derivative of one word couples it to products of two
shorter (or equal-length) subword traces, with coefficients built from
the parameter pair. `solve_hierarchy` integrates every word up to a
given length simultaneously with a classical Runge-Kutta scheme and a
step-halving error estimate; `moment_rhs` exposes the coupling for a
single word so the structure stays inspectable.

Two Monte-Carlo cross-checks live here as well: `factorization_check`
compares the hierarchy at combined parameters with the simulated
product of two freely independent factors, and `t_derivative_check`
compares a finite difference of simulated word traces along the twist
scaling with the closed-form derivative `t_derivative_rhs`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product as _product

import numpy as np

from .errors import MissingLowerWord, StepTooLarge

__all__ = [
    "StarWord",
    "MomentTable",
    "moment_rhs",
    "solve_hierarchy",
    "t_derivative_rhs",
    "mc_star_moments",
    "factorization_check",
    "t_derivative_check",
]

_MAX_LEN = 10


@dataclass(frozen=True)
class StarWord:
    """A cyclic word in the letters b (0) and b* (1).

    Words are stored as their lexicographically smallest rotation, so
    two words equal up to a cyclic shift compare and hash equal, which
    matches the trace they represent.
    """

    letters: tuple

    def __post_init__(self):
        ls = tuple(int(x) for x in self.letters)
        if any(x not in (0, 1) for x in ls):
            raise ValueError("letters must be 0 (plain) or 1 (star)")
        if ls:
            ls = min(ls[i:] + ls[:i] for i in range(len(ls)))
        object.__setattr__(self, "letters", ls)

    @classmethod
    def from_string(cls, text: str) -> "StarWord":
        """Parse a word from '+' (plain) and '*' (star) characters."""
        table = {"+": 0, "*": 1}
        try:
            return cls(tuple(table[c] for c in text))
        except KeyError as exc:
            raise ValueError(f"invalid word character {exc.args[0]!r}") from None

    def to_string(self) -> str:
        return "".join("+" if x == 0 else "*" for x in self.letters)

    def conjugate(self) -> "StarWord":
        """The word of the adjoint trace: reversed order, flipped letters."""
        return StarWord(tuple(1 - x for x in reversed(self.letters)))

    def __len__(self):
        return len(self.letters)

    def __repr__(self):
        return f"StarWord({self.to_string()!r})"


def _pair_terms(letters):
    """Yield (code, outer, inner) for every letter pair of a word.

    code 0: both letters plain, code 1: both star, code 2: mixed. The
    outer and inner tuples are the two subwords whose trace product
    multiplies the pair coefficient; which of the pair's letters they
    absorb depends on the letter pattern.
    """
    n = len(letters)
    for a in range(n):
        for b in range(a + 1, n):
            ea, eb = letters[a], letters[b]
            if ea == eb:
                yield ea, letters[: a + 1] + letters[b + 1 :], letters[a + 1 : b + 1]
            elif ea == 0:
                yield 2, letters[: a + 1] + letters[b:], letters[a + 1 : b]
            else:
                yield 2, letters[:a] + letters[b + 1 :], letters[a : b + 1]


def _snapshot_value(snapshot, letters):
    if not letters:
        return 1.0 + 0j
    word = StarWord(letters)
    try:
        return complex(snapshot[word])
    except KeyError:
        raise MissingLowerWord(
            f"snapshot lacks the word {word.to_string()!r}"
        ) from None


def moment_rhs(word: StarWord, snapshot, s: float, s_prime: float, tau: complex) -> complex:
    """Time derivative of one word trace given a snapshot of all traces.

    `snapshot` maps StarWord to complex trace values and must contain
    every subword the coupling needs (MissingLowerWord otherwise). The
    total variance rate is s + s_prime; pairs of equal letters couple
    with -(s + s_prime - tau) (plain) or its conjugate (star), mixed
    pairs with +(s + s_prime).
    """
    letters = word.letters
    n = len(letters)
    if n == 0:
        return 0.0 + 0j
    tau = complex(tau)
    tot = s + s_prime
    n_star = sum(letters)
    drift = -0.5 * (n * tot - (n - n_star) * tau - n_star * tau.conjugate())
    acc = drift * _snapshot_value(snapshot, letters)
    pair_coeff = (-(tot - tau), -(tot - tau.conjugate()), tot)
    for code, outer, inner in _pair_terms(letters):
        acc += (
            pair_coeff[code]
            * _snapshot_value(snapshot, outer)
            * _snapshot_value(snapshot, inner)
        )
    return acc


@dataclass(frozen=True, eq=False)
class MomentTable:
    """Word traces of the flow on a uniform grid of flow times."""

    s: float
    tau: complex
    r_nodes: np.ndarray
    table: dict = field(repr=False)

    def trajectory(self, word: StarWord) -> np.ndarray:
        """Complex trace values of `word` at every grid node."""
        try:
            return self.table[word]
        except KeyError:
            raise MissingLowerWord(
                f"table does not contain the word {word.to_string()!r}"
            ) from None

    def final(self, word: StarWord) -> complex:
        """Trace of `word` at the last grid node."""
        return complex(self.trajectory(word)[-1])

    @property
    def words(self):
        return sorted(self.table, key=lambda w: (len(w), w.letters))


def _canonical_words(max_len: int):
    seen = set()
    out = []
    for length in range(1, max_len + 1):
        for bits in _product((0, 1), repeat=length):
            w = StarWord(bits)
            if w.letters not in seen:
                seen.add(w.letters)
                out.append(w)
    out.sort(key=lambda w: (len(w), w.letters))
    return out


class _CompiledHierarchy:
    """Vectorized right-hand side for the full word system.

    Slot 0 is the empty word with constant value 1; slot i + 1 holds
    words[i]. The quadratic coupling is flattened into parallel index
    arrays so one evaluation is a handful of numpy operations.
    """

    def __init__(self, words, s, tau):
        tau = complex(tau)
        tot = float(s)
        index = {w.letters: i + 1 for i, w in enumerate(words)}
        nslots = len(words) + 1
        drift = np.zeros(nslots, dtype=complex)
        trg, code, oi, ii = [], [], [], []
        for w in words:
            slot = index[w.letters]
            n = len(w.letters)
            n_star = sum(w.letters)
            drift[slot] = -0.5 * (
                n * tot - (n - n_star) * tau - n_star * tau.conjugate()
            )
            for c, outer, inner in _pair_terms(w.letters):
                trg.append(slot)
                code.append(c)
                oi.append(index[StarWord(outer).letters] if outer else 0)
                ii.append(index[StarWord(inner).letters] if inner else 0)
        pair_coeff = np.array(
            [-(tot - tau), -(tot - tau.conjugate()), tot], dtype=complex
        )
        self.nslots = nslots
        self.drift = drift
        self.trg = np.asarray(trg, dtype=np.intp)
        self.coeff = pair_coeff[np.asarray(code, dtype=np.intp)]
        self.oi = np.asarray(oi, dtype=np.intp)
        self.ii = np.asarray(ii, dtype=np.intp)

    def rhs(self, y):
        out = self.drift * y
        quad = self.coeff * y[self.oi] * y[self.ii]
        out += np.bincount(self.trg, quad.real, minlength=self.nslots)
        out += 1j * np.bincount(self.trg, quad.imag, minlength=self.nslots)
        return out

    def integrate(self, r_max, steps):
        h = r_max / steps
        y = np.ones(self.nslots, dtype=complex)
        traj = np.empty((steps + 1, self.nslots), dtype=complex)
        traj[0] = y
        for k in range(steps):
            k1 = self.rhs(y)
            k2 = self.rhs(y + 0.5 * h * k1)
            k3 = self.rhs(y + 0.5 * h * k2)
            k4 = self.rhs(y + h * k3)
            y = y + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
            traj[k + 1] = y
        return traj


def solve_hierarchy(
    s: float, tau: complex, r_max: float = 1.0, max_len: int = 4, steps: int = 200
) -> MomentTable:
    """Integrate every word trace up to length max_len over [0, r_max].

    Uses fourth-order Runge-Kutta at `steps` and at 2 * steps; if the
    two runs disagree by more than 1e-8 anywhere on the shared grid a
    StepTooLarge is raised. tau = 0 is allowed (the flow is then
    unitary); the pair must satisfy |tau - s| <= s.
    """
    tau = complex(tau)
    if not (isinstance(max_len, (int, np.integer)) and 1 <= max_len <= _MAX_LEN):
        raise ValueError(f"max_len must be an integer in [1, {_MAX_LEN}]")
    if not s > 0:
        raise ValueError("s must be positive")
    if abs(tau - s) > s + 1e-12:
        raise ValueError("inadmissible parameter pair")
    if not r_max > 0:
        raise ValueError("r_max must be positive")
    if steps < 2:
        raise ValueError("steps must be at least 2")
    words = _canonical_words(max_len)
    system = _CompiledHierarchy(words, s, tau)
    fine = system.integrate(r_max, 2 * steps)[::2]
    coarse = system.integrate(r_max, steps)
    err = float(np.max(np.abs(fine - coarse)))
    if err > 1e-8:
        raise StepTooLarge(
            f"step-halving error estimate {err:.2e} exceeds 1e-8; increase steps"
        )
    table = {w: fine[:, i + 1].copy() for i, w in enumerate(words)}
    table[StarWord(())] = np.ones(steps + 1, dtype=complex)
    return MomentTable(
        s=float(s),
        tau=tau,
        r_nodes=np.linspace(0.0, r_max, steps + 1),
        table=table,
    )


def t_derivative_rhs(word: StarWord, snapshot, tau: complex) -> complex:
    """Derivative of a word trace along the twist scaling t -> t tau.

    For traces of words in B = a1 b a2 where only the twist parameter
    is scaled, the derivative is (f/2) sum_j tau^(e_j) plus, for every
    pair of equal letters, tau^(e_j) times the product of the two split
    traces; mixed pairs cancel. `snapshot` maps StarWord to the traces
    of the B-words at the centre point.
    """
    letters = word.letters
    n = len(letters)
    if n == 0:
        return 0.0 + 0j
    tau = complex(tau)
    n_star = sum(letters)
    acc = 0.5 * ((n - n_star) * tau + n_star * tau.conjugate()) * _snapshot_value(
        snapshot, letters
    )
    for code, outer, inner in _pair_terms(letters):
        if code == 2:
            continue
        letter_tau = tau if code == 0 else tau.conjugate()
        acc += letter_tau * _snapshot_value(snapshot, outer) * _snapshot_value(
            snapshot, inner
        )
    return acc


# ---------------------------------------------------------------------------
# Monte-Carlo cross-checks
# ---------------------------------------------------------------------------


def _word_traces(B, words):
    """Normalized traces of matrix words in B and its adjoint."""
    BH = B.conj().T
    n = B.shape[0]
    out = {}
    for w in words:
        M = None
        for letter in w.letters:
            F = B if letter == 0 else BH
            M = F if M is None else M @ F
        out[w] = np.trace(M) / n if M is not None else 1.0 + 0j
    return out


def mc_star_moments(cfg, factors, words, stream_offset: int = 0):
    """Simulated word traces of a product of independent flow factors.

    `factors` is a sequence of (s, tau) pairs; each factor is simulated
    from its own substream and the factors are multiplied in order.
    Every sample pairs a fine and a half-step trajectory and uses the
    extrapolated combination 2 f(fine) - f(coarse) to cancel the
    leading weak bias. Returns {word: (mean, stderr)}.
    """
    from .rmt import _map_samples, simulate_b_pair

    factors = [(float(a), complex(b)) for a, b in factors]
    words = list(words)

    def one(i):
        prod_f = None
        prod_c = None
        for j, (s_j, tau_j) in enumerate(factors):
            bf, bc = simulate_b_pair(
                cfg, s_j, tau_j, sample_index=(i, stream_offset + 2 * j)
            )
            prod_f = bf if prod_f is None else prod_f @ bf
            prod_c = bc if prod_c is None else prod_c @ bc
        tf = _word_traces(prod_f, words)
        tc = _word_traces(prod_c, words)
        return [2.0 * tf[w] - tc[w] for w in words]

    vals = np.array(_map_samples(one, cfg.samples))
    out = {}
    for k, w in enumerate(words):
        col = vals[:, k]
        mean = complex(np.mean(col))
        if cfg.samples > 1:
            spread = float(
                np.sqrt(
                    (np.var(col.real, ddof=1) + np.var(col.imag, ddof=1))
                    / cfg.samples
                )
            )
        else:
            spread = 0.0
        out[w] = (mean, spread)
    return out


def factorization_check(
    s: float,
    tau: complex,
    s_prime: float,
    tau_prime: complex,
    max_len: int = 4,
    cfg=None,
    steps: int = 400,
) -> dict:
    """Compare combined-parameter moments with a simulated free product.

    The hierarchy is solved at (s + s_prime, tau + tau_prime) and its
    final values are compared with Monte-Carlo word traces of B1 @ B2,
    where B1 and B2 are independent simulations at the two parameter
    pairs. Both pairs must be admissible. Returns a report with the
    per-word deviations in units of the Monte-Carlo standard error.
    """
    from .rmt import SimConfig

    if cfg is None:
        cfg = SimConfig()
    tau = complex(tau)
    tau_prime = complex(tau_prime)
    for a, b in ((s, tau), (s_prime, tau_prime)):
        if not a > 0 or abs(b - a) > a + 1e-12:
            raise ValueError("both parameter pairs must be admissible")
    predicted = solve_hierarchy(
        s + s_prime, tau + tau_prime, r_max=1.0, max_len=max_len, steps=steps
    )
    words = _canonical_words(max_len)
    mc = mc_star_moments(cfg, [(s, tau), (s_prime, tau_prime)], words)
    rows = []
    for w in words:
        pred = predicted.final(w)
        mean, err = mc[w]
        sigma = abs(mean - pred) / err if err > 0 else np.inf
        rows.append(
            {
                "word": w.to_string(),
                "predicted": pred,
                "mc_mean": mean,
                "mc_stderr": err,
                "sigma": float(sigma),
            }
        )
    return {
        "s": s,
        "tau": tau,
        "s_prime": s_prime,
        "tau_prime": tau_prime,
        "samples": cfg.samples,
        "words": rows,
        "max_sigma": float(max(r["sigma"] for r in rows)),
    }


def t_derivative_check(
    s: float,
    tau: complex,
    words,
    a1=None,
    a2=None,
    t: float = 1.0,
    h: float = 0.05,
    cfg=None,
) -> dict:
    """Compare a simulated t-derivative of word traces with its closed form.

    Words are formed in B = a1 @ b @ a2 with the flow simulated at
    twist t * tau; the same noise increments drive every evaluation
    point, so the five-point finite difference in t is tightly coupled.
    The difference statistic is paired per sample against the closed
    form evaluated on that sample's centre traces. All evaluated twist
    values t' * tau must keep (s, t' tau) admissible.
    """
    from .rmt import SimConfig, _map_samples, simulate_b

    if cfg is None:
        cfg = SimConfig()
    tau = complex(tau)
    words = [w if isinstance(w, StarWord) else StarWord.from_string(w) for w in words]
    if not words:
        raise ValueError("at least one word is required")
    offsets = (-h, -0.5 * h, 0.0, 0.5 * h, h)
    for d in offsets:
        tw = (t + d) * tau
        if abs(tw - s) > s + 1e-12:
            raise ValueError("twist scaling leaves the admissible range")
    needed = set(words)
    for w in words:
        for code, outer, inner in _pair_terms(w.letters):
            if code == 2:
                continue
            if outer:
                needed.add(StarWord(outer))
            if inner:
                needed.add(StarWord(inner))
    needed = sorted(needed, key=lambda w: (len(w), w.letters))

    def one(i):
        traces = []
        for d in offsets:
            b = simulate_b(cfg, s, (t + d) * tau, sample_index=i)
            B = b if a1 is None else a1 @ b
            B = B if a2 is None else B @ a2
            traces.append(_word_traces(B, needed if d == 0.0 else words))
        fd = {}
        for w in words:
            wide = traces[4][w] - traces[0][w]
            narrow = traces[3][w] - traces[1][w]
            fd[w] = (8.0 * narrow - wide) / (6.0 * h)
        centre = traces[2]
        rhs = {w: t_derivative_rhs(w, centre, tau) for w in words}
        return [fd[w] - rhs[w] for w in words]

    vals = np.array(_map_samples(one, cfg.samples))
    rows = []
    for k, w in enumerate(words):
        col = vals[:, k]
        mean = complex(np.mean(col))
        if cfg.samples > 1:
            err = float(
                np.sqrt(
                    (np.var(col.real, ddof=1) + np.var(col.imag, ddof=1))
                    / cfg.samples
                )
            )
        else:
            err = 0.0
        sigma = abs(mean) / err if err > 0 else np.inf
        rows.append(
            {
                "word": w.to_string(),
                "fd_minus_rhs": mean,
                "stderr": err,
                "sigma": float(sigma),
            }
        )
    return {
        "s": s,
        "tau": tau,
        "t": t,
        "h": h,
        "samples": cfg.samples,
        "words": rows,
        "max_sigma": float(max(r["sigma"] for r in rows)),
    }
