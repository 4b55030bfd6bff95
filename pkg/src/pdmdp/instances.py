"""Instance generators and the ``dmdp v1`` text format.

Layout (whitespace separated, one row per line when written here)::

    dmdp 1 <S> <A> <gamma> <expected|full> <raw|cumulative|tree>
    rewards   expected: A blocks of S values r_a(i)
              full:     for (i, a) in i-major order, S values r_ij(a)
    probs     for (i, a) in i-major order:
              raw        S probabilities
              cumulative S running sums ending at 1
              tree       2L-1 sum-tree nodes, breadth first

Floats are written with 17 significant digits. Cumulative rows are written
as the exact decimal expansion of the exact prefix sums, so adjacent
differences give back the original binary64 probabilities bit for bit.
"""
from __future__ import annotations

import decimal
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import rng as rngmod
from .model import TOL, DmdpInstance, RandomizedPolicy, validate_instance
from .trees import build_node_rows, leaf_count

ENCODINGS = ("raw", "cumulative", "tree")
REWARD_KINDS = ("expected", "full")
KINDS = ("dirichlet", "ergodic_mixed", "transient")

# Exact for sums of binary64 values in [0, 1].
_EXACT = decimal.Context(prec=1200, rounding=decimal.ROUND_HALF_EVEN)


class ParseError(ValueError):
    def __init__(self, diagnostics):
        if isinstance(diagnostics, str):
            diagnostics = [diagnostics]
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


@dataclass(frozen=True)
class EncodingTag:
    encoding: str = "raw"
    reward_kind: str = "expected"

    def __post_init__(self):
        if self.encoding not in ENCODINGS:
            raise ValueError(f"unknown encoding {self.encoding!r}")
        if self.reward_kind not in REWARD_KINDS:
            raise ValueError(f"unknown reward kind {self.reward_kind!r}")


def gen_instance(
    num_states: int,
    num_actions: int,
    gamma: float,
    kind: str = "ergodic_mixed",
    eta: float = 0.1,
    seed: int = 0,
    reward_kind: str = "expected",
) -> DmdpInstance:
    """Random instance, deterministic in its arguments.

    ``dirichlet``: rows from a flat Dirichlet. ``ergodic_mixed``: each row
    mixed with the uniform row at weight ``eta``, so every entry is at least
    ``eta / S``. ``transient``: the first ``S // 2`` states leak into a closed
    block formed by the remaining states and are never re-entered from it.
    Rewards are uniform on ``[0, 1]``.
    """
    if num_states < 1 or num_actions < 1:
        raise ValueError("need at least one state and one action")
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must lie in (0,1), got {gamma}")
    if not 0 <= eta <= 1:
        raise ValueError(f"eta must lie in [0,1], got {eta}")
    if kind not in KINDS:
        raise ValueError(f"unknown instance kind {kind!r}")
    if reward_kind not in REWARD_KINDS:
        raise ValueError(f"unknown reward kind {reward_kind!r}")
    s, a = num_states, num_actions
    rng = rngmod.make_rng(seed)
    if s == 1:
        p = np.ones((1, a, 1))
    elif kind == "dirichlet":
        p = rng.dirichlet(np.ones(s), size=(s, a))
    elif kind == "ergodic_mixed":
        p = (1 - eta) * rng.dirichlet(np.ones(s), size=(s, a)) + eta / s
    else:
        split = s // 2
        p = np.zeros((s, a, s))
        p[:split] = rng.dirichlet(np.ones(s), size=(split, a))
        p[split:, :, split:] = rng.dirichlet(np.ones(s - split), size=(s - split, a))
    shape = (s, a) if reward_kind == "expected" else (s, a, s)
    rewards = rng.random(shape)
    return DmdpInstance(p, rewards, gamma)


def _f(x: float) -> str:
    return format(float(x), ".17g")


def _row(values) -> str:
    return " ".join(_f(x) for x in values)


def _cumulative_row(probs) -> str:
    out = []
    acc = decimal.Decimal(0)
    for p in probs:
        acc = _EXACT.add(acc, decimal.Decimal(float(p)))
        text = format(acc, "f")
        if "." in text:
            text = text.rstrip("0").rstrip(".")
        out.append(text)
    return " ".join(out)


def serialize_instance(inst: DmdpInstance, tag: EncodingTag | str = "raw") -> str:
    if isinstance(tag, str):
        tag = EncodingTag(tag, inst.reward_kind)
    s, a = inst.num_states, inst.num_actions
    lines = [f"dmdp 1 {s} {a} {_f(inst.discount)} {tag.reward_kind} {tag.encoding}"]
    if tag.reward_kind == "expected":
        r = inst.expected_rewards()
        lines.extend(_row(r[:, k]) for k in range(a))
    else:
        r = inst.transition_rewards()
        lines.extend(_row(r[i, k]) for i in range(s) for k in range(a))
    p = inst.transitions
    if tag.encoding == "raw":
        lines.extend(_row(p[i, k]) for i in range(s) for k in range(a))
    elif tag.encoding == "cumulative":
        lines.extend(_cumulative_row(p[i, k]) for i in range(s) for k in range(a))
    else:
        nodes = inst.transition_nodes if inst.transition_nodes is not None else build_node_rows(p)
        lines.extend(_row(nodes[i, k]) for i in range(s) for k in range(a))
    return "\n".join(lines) + "\n"


class _Tokens:
    def __init__(self, lines: list[str]):
        self._it: Iterator = ((n, tok) for n, line in enumerate(lines, start=2) for tok in line.split())

    def take(self, count: int, what: str):
        out = []
        for _ in range(count):
            try:
                out.append(next(self._it))
            except StopIteration:
                raise ParseError(f"unexpected end of input while reading {what}") from None
        return out

    def leftover(self):
        return next(self._it, None)


def _floats(tokens, what):
    vals = []
    for line, tok in tokens:
        try:
            vals.append(float(tok))
        except ValueError:
            raise ParseError(f"line {line}: bad number {tok!r} in {what}") from None
    return np.array(vals)


def _decimals(tokens, what):
    vals = []
    for line, tok in tokens:
        try:
            vals.append(decimal.Decimal(tok))
        except decimal.InvalidOperation:
            raise ParseError(f"line {line}: bad number {tok!r} in {what}") from None
        if not vals[-1].is_finite():
            raise ParseError(f"line {line}: bad number {tok!r} in {what}")
    return vals


def _parse_header(line: str):
    parts = line.split()
    if len(parts) != 7 or parts[0] != "dmdp":
        raise ParseError(f"line 1: malformed header {line.strip()!r}")
    if parts[1] != "1":
        raise ParseError(f"line 1: unsupported version {parts[1]!r}")
    try:
        s, a, gamma = int(parts[2]), int(parts[3]), float(parts[4])
    except ValueError:
        raise ParseError(f"line 1: malformed header {line.strip()!r}") from None
    if s < 1 or a < 1:
        raise ParseError("line 1: state and action counts must be positive")
    if parts[5] not in REWARD_KINDS:
        raise ParseError(f"line 1: unknown reward kind {parts[5]!r}")
    if parts[6] not in ENCODINGS:
        raise ParseError(f"line 1: unknown encoding {parts[6]!r}")
    return s, a, gamma, EncodingTag(parts[6], parts[5])


def _check_raw(row, where) -> str | None:
    neg = np.nonzero(~(row >= 0))[0]
    if neg.size:
        return f"{where}: negative probability {float(row[neg[0]])!r} at column {int(neg[0])}"
    total = row.sum()
    if abs(total - 1.0) > TOL:
        return f"{where}: row sum {float(total)!r} != 1"
    return None


def _decode_cumulative(values, where):
    probs = np.empty(len(values))
    prev = decimal.Decimal(0)
    for j, c in enumerate(values):
        if c < prev:
            return None, f"{where}: non-monotone at column {j}"
        probs[j] = float(_EXACT.subtract(c, prev))
        prev = c
    if abs(float(prev) - 1.0) > TOL:
        return None, f"{where}: cumulative row ends at {float(prev)!r}, not 1"
    return probs, None


def _check_tree(nodes, s, where) -> str | None:
    n_leaves = (nodes.size + 1) // 2
    if np.any(~(nodes >= 0)):
        k = int(np.nonzero(~(nodes >= 0))[0][0])
        return f"{where}: negative node value at node {k}"
    if np.any(nodes[n_leaves - 1 + s :] != 0):
        return f"{where}: nonzero padding leaf"
    for k in range(n_leaves - 1):
        children = nodes[2 * k + 1] + nodes[2 * k + 2]
        if abs(nodes[k] - children) > TOL:
            return f"{where}: node/children mismatch at node {k} ({float(nodes[k])!r} vs {float(children)!r})"
    total = nodes[n_leaves - 1 :].sum()
    if abs(total - 1.0) > TOL:
        return f"{where}: row sum {float(total)!r} != 1"
    return None


def parse_instance(text: str | bytes, trust_input: bool = False) -> tuple[DmdpInstance, EncodingTag]:
    """Parse a ``dmdp v1`` document into the canonical instance.

    Every malformed row yields one diagnostic; all of them are reported
    together in a :class:`ParseError`. With ``trust_input`` the probability
    rows are taken as given and, for tree inputs, the node arrays are kept
    as the solver's next-state samplers without being rebuilt.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    lines = text.splitlines()
    if not lines:
        raise ParseError("line 1: empty input")
    s, a, gamma, tag = _parse_header(lines[0])
    tokens = _Tokens(lines[1:])
    diagnostics = []

    if tag.reward_kind == "expected":
        blocks = [_floats(tokens.take(s, "rewards"), "rewards") for _ in range(a)]
        rewards = np.stack(blocks, axis=1)
    else:
        rewards = np.empty((s, a, s))
        for i in range(s):
            for k in range(a):
                rewards[i, k] = _floats(tokens.take(s, "rewards"), "rewards")

    p = np.empty((s, a, s))
    n_nodes = 2 * leaf_count(s) - 1
    nodes = np.empty((s, a, n_nodes)) if tag.encoding == "tree" else None
    for i in range(s):
        for k in range(a):
            width = n_nodes if tag.encoding == "tree" else s
            toks = tokens.take(width, f"probabilities of ({i},{k})")
            where = f"line {toks[0][0]} ({i},{k})"
            if tag.encoding == "raw":
                p[i, k] = _floats(toks, "probabilities")
                problem = None if trust_input else _check_raw(p[i, k], where)
            elif tag.encoding == "cumulative":
                probs, problem = _decode_cumulative(_decimals(toks, "probabilities"), where)
                if probs is not None:
                    p[i, k] = probs
            else:
                nodes[i, k] = _floats(toks, "probabilities")
                p[i, k] = nodes[i, k, leaf_count(s) - 1 : leaf_count(s) - 1 + s]
                problem = None if trust_input else _check_tree(nodes[i, k], s, where)
            if problem:
                diagnostics.append(problem)
    extra = tokens.leftover()
    if extra is not None:
        diagnostics.append(f"line {extra[0]}: trailing data {extra[1]!r}")
    if diagnostics:
        raise ParseError(diagnostics)

    keep_nodes = nodes if (trust_input and nodes is not None) else None
    inst = DmdpInstance(p, rewards, gamma, keep_nodes)
    if not trust_input:
        problems = validate_instance(inst)
        if problems:
            raise ParseError(problems)
    return inst, tag


def write_instance(path, inst: DmdpInstance, tag: EncodingTag | str = "raw") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_instance(inst, tag))


def read_instance(path, trust_input: bool = False) -> tuple[DmdpInstance, EncodingTag]:
    with open(path, encoding="utf-8") as fh:
        return parse_instance(fh.read(), trust_input)


def serialize_policy(pol: RandomizedPolicy) -> str:
    s, a = pol.rows.shape
    return "\n".join([f"policy 1 {s} {a}"] + [_row(r) for r in pol.rows]) + "\n"


def parse_policy(text: str) -> RandomizedPolicy:
    lines = text.splitlines()
    parts = lines[0].split() if lines else []
    if len(parts) != 4 or parts[:2] != ["policy", "1"]:
        raise ParseError("line 1: malformed policy header")
    try:
        s, a = int(parts[2]), int(parts[3])
    except ValueError:
        raise ParseError("line 1: malformed policy header") from None
    tokens = _Tokens(lines[1:])
    rows = np.stack([_floats(tokens.take(a, f"policy row {i}"), "policy") for i in range(s)])
    try:
        return RandomizedPolicy(rows)
    except ValueError as exc:
        raise ParseError(str(exc)) from None
