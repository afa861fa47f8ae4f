"""CTC probability model: collapse, log-likelihood, gradient, greedy decoding.

The forward/backward recursions run entirely in log space (frame counts of
several hundred underflow linear-space products). A brute-force path
enumerator doubles as the verification oracle for small instances and must
never share code with the recursions it checks.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

NEG_INF = float("-inf")

# Brute-force enumeration bounds: |extended alphabet| ** T paths.
BRUTE_FORCE_MAX_T = 8
BRUTE_FORCE_MAX_CLASSES = 4


class InfeasibleTargetError(ValueError):
    """Target needs more frames than the input provides."""


@dataclass(frozen=True)
class Alphabet:
    """Ordered target symbols plus the CTC blank.

    The blank occupies index 0 of the extended alphabet; symbol ``i`` of
    ``symbols`` maps to extended index ``i + 1``. The mapping is a bijection
    and stable for the lifetime of the object.
    """

    symbols: tuple[str, ...]
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("alphabet symbols must be unique")
        object.__setattr__(
            self, "_index", {ch: i + 1 for i, ch in enumerate(self.symbols)}
        )

    @staticmethod
    def of(symbols: str) -> "Alphabet":
        return Alphabet(tuple(symbols))

    @property
    def blank_index(self) -> int:
        return 0

    @property
    def size(self) -> int:
        return len(self.symbols)

    @property
    def extended_size(self) -> int:
        return len(self.symbols) + 1

    def encode(self, text: str) -> list[int]:
        """Map text to extended-alphabet indices; unknown codepoints raise."""
        try:
            return [self._index[ch] for ch in text]
        except KeyError as exc:
            raise ValueError(f"codepoint {exc.args[0]!r} not in alphabet") from None

    def symbol(self, extended_index: int) -> str:
        if extended_index == 0:
            raise ValueError("blank has no symbol")
        return self.symbols[extended_index - 1]

    def __contains__(self, ch: str) -> bool:
        return ch in self._index


def validate_log_probs(log_probs: np.ndarray, alphabet: Alphabet, tol: float = 1e-6) -> None:
    """Check the FrameLogProbs contract: rows exponentiate-and-sum to 1."""
    lp = np.asarray(log_probs)
    if lp.ndim != 2 or lp.shape[0] < 1:
        raise ValueError(f"expected a T x K matrix with T >= 1, got shape {lp.shape}")
    if lp.shape[1] != alphabet.extended_size:
        raise ValueError(
            f"expected {alphabet.extended_size} classes, got {lp.shape[1]}"
        )
    sums = np.exp(lp).sum(axis=1)
    if not np.allclose(sums, 1.0, atol=tol):
        raise ValueError("rows are not log-distributions")


def collapse(path, alphabet: Alphabet) -> str:
    """Collapse an alignment path: merge adjacent repeats, then drop blanks."""
    out = []
    prev = None
    for idx in path:
        if idx >= alphabet.extended_size or idx < 0:
            raise ValueError(f"path entry {idx} outside extended alphabet")
        if idx != prev and idx != alphabet.blank_index:
            out.append(alphabet.symbol(idx))
        prev = idx
    return "".join(out)


def _extended_target(labels: list[int], blank: int) -> list[int]:
    ext = [blank]
    for lab in labels:
        ext.append(lab)
        ext.append(blank)
    return ext


def required_frames(text: str) -> int:
    """Minimum T able to emit ``text``: length plus one blank per repeat."""
    repeats = sum(1 for a, b in zip(text, text[1:]) if a == b)
    return len(text) + repeats


def _forward(log_probs: np.ndarray, ext: list[int]) -> np.ndarray:
    """Alpha recursion over the blank-interleaved target, log space.

    alpha[t, s] includes the emission at frame t. Rows are computed with
    shifted vector log-sum-exp so T ~ hundreds stays fast.
    """
    T = log_probs.shape[0]
    S = len(ext)
    ext_arr = np.asarray(ext)
    emit = log_probs[:, ext_arr]  # (T, S)

    # skip transition allowed into s when ext[s] is a label differing from ext[s-2]
    can_skip = np.zeros(S, dtype=bool)
    if S > 2:
        can_skip[2:] = (ext_arr[2:] != 0) & (ext_arr[2:] != ext_arr[:-2])

    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = emit[0, 0]
    if S > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, T):
        prev = alpha[t - 1]
        stay = prev
        step = np.concatenate(([NEG_INF], prev[:-1]))
        skip = np.concatenate(([NEG_INF, NEG_INF], prev[:-2]))[:S]
        skip = np.where(can_skip, skip, NEG_INF)
        with np.errstate(invalid="ignore"):
            merged = np.logaddexp(np.logaddexp(stay, step), skip)
        alpha[t] = merged + emit[t]
    return alpha


def _backward(log_probs: np.ndarray, ext: list[int]) -> np.ndarray:
    """Beta recursion, log space; beta[t, s] excludes the emission at frame t."""
    T = log_probs.shape[0]
    S = len(ext)
    ext_arr = np.asarray(ext)
    emit = log_probs[:, ext_arr]

    can_skip_from = np.zeros(S, dtype=bool)
    if S > 2:
        can_skip_from[:-2] = (ext_arr[2:] != 0) & (ext_arr[2:] != ext_arr[:-2])

    beta = np.full((T, S), NEG_INF)
    beta[T - 1, S - 1] = 0.0
    if S > 1:
        beta[T - 1, S - 2] = 0.0
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1] + emit[t + 1]
        stay = nxt
        step = np.concatenate((nxt[1:], [NEG_INF]))
        skip = np.concatenate((nxt[2:], [NEG_INF, NEG_INF]))[:S]
        skip = np.where(can_skip_from, skip, NEG_INF)
        with np.errstate(invalid="ignore"):
            beta[t] = np.logaddexp(np.logaddexp(stay, step), skip)
    return beta


def ctc_log_likelihood(log_probs: np.ndarray, target: str, alphabet: Alphabet) -> float:
    """log P(target | x) summed over all alignment paths collapsing to target.

    Returns -inf for infeasible targets (the distinguished "no valid path"
    result); raises for codepoints outside the alphabet.
    """
    lp = np.asarray(log_probs, dtype=np.float64)
    labels = alphabet.encode(target)
    T = lp.shape[0]
    if required_frames(target) > T:
        return NEG_INF
    ext = _extended_target(labels, alphabet.blank_index)
    alpha = _forward(lp, ext)
    if len(ext) == 1:
        return float(alpha[T - 1, 0])
    return float(np.logaddexp(alpha[T - 1, -1], alpha[T - 1, -2]))


def ctc_gradient(logits: np.ndarray, target: str, alphabet: Alphabet) -> np.ndarray:
    """Gradient of -log P(target | x) w.r.t. unnormalized per-frame logits.

    Row-wise softmax is folded in: grad = softmax(logits) - posterior, where
    the posterior marginalizes alpha * beta over extended-target states per
    class. Infeasible targets raise (training must surface them, not skip).
    """
    z = np.asarray(logits, dtype=np.float64)
    labels = alphabet.encode(target)
    T = z.shape[0]
    if required_frames(target) > T:
        raise InfeasibleTargetError(
            f"target of length {len(target)} needs {required_frames(target)} frames, got {T}"
        )
    log_probs = z - _logsumexp_rows(z)
    ext = _extended_target(labels, alphabet.blank_index)
    S = len(ext)
    alpha = _forward(log_probs, ext)
    beta = _backward(log_probs, ext)
    if S == 1:
        log_total = alpha[T - 1, 0]
    else:
        log_total = np.logaddexp(alpha[T - 1, -1], alpha[T - 1, -2])
    if not np.isfinite(log_total):
        raise InfeasibleTargetError("no valid alignment path has nonzero probability")

    ab = alpha + beta  # (T, S), log of path mass through each state
    log_gamma = np.full((T, alphabet.extended_size), NEG_INF)
    ext_arr = np.asarray(ext)
    for k in range(alphabet.extended_size):
        cols = ab[:, ext_arr == k]
        if cols.shape[1]:
            with np.errstate(invalid="ignore"):
                log_gamma[:, k] = _logsumexp_rows(cols)[:, 0]
    gamma = np.exp(log_gamma - log_total)
    return np.exp(log_probs) - gamma


def _logsumexp_rows(m: np.ndarray) -> np.ndarray:
    mx = np.max(m, axis=1, keepdims=True)
    safe = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(divide="ignore"):
        return safe + np.log(np.sum(np.exp(m - safe), axis=1, keepdims=True))


def greedy_decode(log_probs: np.ndarray, alphabet: Alphabet) -> str:
    """Best-path decoding: per-frame argmax, then collapse.

    np.argmax resolves ties toward the lowest class index, which is the
    documented tie rule (blank wins a tie at index 0).
    """
    lp = np.asarray(log_probs)
    path = np.argmax(lp, axis=1)
    return collapse(path.tolist(), alphabet)


def brute_force_ctc(log_probs: np.ndarray, target: str, alphabet: Alphabet) -> float:
    """Exact P(target | x) by enumerating every alignment path.

    Refuses instances beyond T=8 or 4 extended classes; this is the oracle
    against which the forward recursion is validated.
    """
    lp = np.asarray(log_probs, dtype=np.float64)
    T, K = lp.shape
    if T > BRUTE_FORCE_MAX_T or K > BRUTE_FORCE_MAX_CLASSES:
        raise ValueError(
            f"instance too large for enumeration: T={T}, classes={K} "
            f"(bounds {BRUTE_FORCE_MAX_T}, {BRUTE_FORCE_MAX_CLASSES})"
        )
    total = 0.0
    for path in itertools.product(range(K), repeat=T):
        if collapse(path, alphabet) == target:
            total += float(np.exp(sum(lp[t, k] for t, k in enumerate(path))))
    return total


def brute_force_target_distribution(log_probs: np.ndarray, alphabet: Alphabet) -> dict[str, float]:
    """P(y | x) for every reachable target, by grouping paths under collapse."""
    lp = np.asarray(log_probs, dtype=np.float64)
    T, K = lp.shape
    if T > BRUTE_FORCE_MAX_T or K > BRUTE_FORCE_MAX_CLASSES:
        raise ValueError(f"instance too large for enumeration: T={T}, classes={K}")
    dist: dict[str, float] = {}
    for path in itertools.product(range(K), repeat=T):
        y = collapse(path, alphabet)
        p = float(np.exp(sum(lp[t, k] for t, k in enumerate(path))))
        dist[y] = dist.get(y, 0.0) + p
    return dist
