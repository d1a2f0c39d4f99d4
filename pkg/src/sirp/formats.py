"""Plain-text readers for matrices, landscapes and games.

All three formats are line based; ``#`` starts a comment and blank lines
are ignored.

Matrix file::

    a b c              # state labels
    0.5 0.5 0.0
    ...

Landscape file: labels, a ``U:`` line with the potential, then the
exploration matrix rows.  Game file: a ``U1`` block header (optionally
tagged ``zero_sum`` or ``potential``) followed by its rows, and a ``U2``
block unless the tag makes it redundant.  Optional ``E1:`` / ``E2:`` lines
label the actions.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .games import TwoPlayerGame
from .landscape import Landscape
from .markov_core import StateSpace, as_markov_matrix


class FormatError(ValueError):
    def __init__(self, source: str, line: int, msg: str):
        super().__init__(f"{source}:{line}: {msg}")
        self.source = source
        self.line = line


@dataclass(frozen=True)
class MatrixFile:
    states: StateSpace
    matrix: np.ndarray


@dataclass(frozen=True)
class LandscapeFile:
    states: StateSpace
    landscape: Landscape


def _lines(text: str):
    for no, raw in enumerate(text.splitlines(), start=1):
        s = raw.split("#", 1)[0].strip()
        if s:
            yield no, s


def _floats(source, no, tokens) -> list[float]:
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise FormatError(source, no, f"expected numbers, got {' '.join(tokens)!r}") from None


def _rows(source, lines, n_rows, n_cols, what) -> tuple[np.ndarray, list[int]]:
    out = []
    nos = []
    for _ in range(n_rows):
        try:
            no, s = next(lines)
        except StopIteration:
            raise FormatError(source, 0, f"{what}: expected {n_rows} rows, found {len(out)}") from None
        vals = _floats(source, no, s.split())
        if len(vals) != n_cols:
            raise FormatError(source, no, f"{what}: expected {n_cols} entries, got {len(vals)}")
        out.append(vals)
        nos.append(no)
    return np.array(out, dtype=float), nos


def _stochastic(source, nos, M) -> np.ndarray:
    # rows typed with finite decimals are renormalized once they pass a loose check
    for no, row in zip(nos, M):
        if np.any(row < 0) or not np.all(np.isfinite(row)):
            raise FormatError(source, no, "transition probabilities must be finite and nonnegative")
        if abs(row.sum() - 1.0) > 1e-9:
            raise FormatError(source, no, f"row sums to {float(row.sum())!r}, not 1")
    M = as_markov_matrix(M, tol=1e-9)
    return M / M.sum(axis=1, keepdims=True)


def _no_trailing(source, lines):
    for no, s in lines:
        raise FormatError(source, no, f"unexpected trailing content {s!r}")


def _read(path_or_text, source=None) -> tuple[str, str]:
    if isinstance(path_or_text, Path) or (isinstance(path_or_text, str) and "\n" not in path_or_text):
        p = Path(path_or_text)
        try:
            return p.read_text(), source or str(p)
        except OSError as exc:
            raise FormatError(source or str(p), 0, f"cannot read file: {exc.strerror}") from None
    return path_or_text, source or "<text>"


def _labels(source, no, s) -> StateSpace:
    if s.endswith(":") or ":" in s.split()[0]:
        s = s.split(":", 1)[1]
    try:
        return StateSpace(tuple(s.split()))
    except ValueError as exc:
        raise FormatError(source, no, str(exc)) from None


def parse_matrix(text: str, source: str = "<text>", stochastic: bool = True) -> MatrixFile:
    lines = _lines(text)
    try:
        no, head = next(lines)
    except StopIteration:
        raise FormatError(source, 0, "empty matrix file") from None
    states = _labels(source, no, head)
    n = states.size
    M, nos = _rows(source, lines, n, n, "matrix")
    _no_trailing(source, lines)
    if stochastic:
        M = _stochastic(source, nos, M)
    return MatrixFile(states, M)


def parse_landscape(text: str, source: str = "<text>") -> LandscapeFile:
    lines = _lines(text)
    try:
        no, head = next(lines)
        states = _labels(source, no, head)
        no, uline = next(lines)
    except StopIteration:
        raise FormatError(source, 0, "landscape file needs labels, a U: line and a matrix") from None
    if not uline.startswith("U:"):
        raise FormatError(source, no, "expected the potential on a line starting with 'U:'")
    U = _floats(source, no, uline[2:].split())
    if len(U) != states.size:
        raise FormatError(source, no, f"potential has {len(U)} entries for {states.size} states")
    M0, nos = _rows(source, lines, states.size, states.size, "exploration matrix")
    M0 = _stochastic(source, nos, M0)
    _no_trailing(source, lines)
    try:
        return LandscapeFile(states, Landscape(M0, np.array(U)))
    except ValueError as exc:
        raise FormatError(source, no, str(exc)) from None


def parse_game(text: str, source: str = "<text>") -> TwoPlayerGame:
    lines = list(_lines(text))
    labels = {}
    blocks = {}
    tag = None
    i = 0
    while i < len(lines):
        no, s = lines[i]
        head = s.split()
        if head[0] in ("E1:", "E2:"):
            labels[head[0][:2]] = _labels(source, no, s)
            i += 1
            continue
        if head[0] not in ("U1", "U2"):
            raise FormatError(source, no, f"expected a U1 or U2 block header, got {s!r}")
        name = head[0]
        if name in blocks:
            raise FormatError(source, no, f"duplicate {name} block")
        if len(head) > 2 or (len(head) == 2 and (name != "U1" or head[1] not in ("zero_sum", "potential"))):
            raise FormatError(source, no, f"bad block header {s!r}")
        if len(head) == 2:
            tag = head[1]
        j = i + 1
        rows = []
        while j < len(lines) and lines[j][1].split()[0] not in ("U1", "U2", "E1:", "E2:"):
            rows.append((lines[j][0], _floats(source, lines[j][0], lines[j][1].split())))
            j += 1
        if not rows:
            raise FormatError(source, no, f"{name} block has no rows")
        width = len(rows[0][1])
        for rno, r in rows:
            if len(r) != width:
                raise FormatError(source, rno, f"{name}: expected {width} entries, got {len(r)}")
        blocks[name] = (no, np.array([r for _, r in rows]))
        i = j
    if "U1" not in blocks:
        raise FormatError(source, 0, "game file has no U1 block")
    U1 = blocks["U1"][1]
    kw = {"E1": labels.get("E1"), "E2": labels.get("E2")}
    try:
        if tag is not None:
            if "U2" in blocks:
                raise FormatError(source, blocks["U2"][0], f"U2 block conflicts with the {tag} tag")
            return TwoPlayerGame.zero_sum(U1, **kw) if tag == "zero_sum" else TwoPlayerGame.potential(U1, **kw)
        if "U2" not in blocks:
            raise FormatError(source, blocks["U1"][0], "U2 block missing (or tag U1 as zero_sum/potential)")
        return TwoPlayerGame(U1, blocks["U2"][1], **kw)
    except FormatError:
        raise
    except ValueError as exc:
        raise FormatError(source, blocks["U1"][0], str(exc)) from None


def sniff(text: str) -> str:
    """Kind of a text file: ``game``, ``landscape`` or ``matrix``."""
    for _, s in _lines(text):
        w = s.split()[0]
        if w in ("U1", "U2", "E1:", "E2:"):
            return "game"
        if w.startswith("U:"):
            return "landscape"
    return "matrix"


def load(path) -> Union[MatrixFile, LandscapeFile, TwoPlayerGame]:
    text, source = _read(Path(path))
    kind = sniff(text)
    if kind == "game":
        return parse_game(text, source)
    if kind == "landscape":
        return parse_landscape(text, source)
    return parse_matrix(text, source)


def load_matrix(path, stochastic: bool = True) -> MatrixFile:
    text, source = _read(Path(path))
    return parse_matrix(text, source, stochastic)


def load_landscape(path) -> LandscapeFile:
    text, source = _read(Path(path))
    return parse_landscape(text, source)


def load_game(path) -> TwoPlayerGame:
    text, source = _read(Path(path))
    return parse_game(text, source)


def format_matrix(M, labels=None) -> str:
    M = np.asarray(M, dtype=float)
    labels = labels or [str(i) for i in range(M.shape[0])]
    out = [" ".join(labels)]
    out += [" ".join(repr(float(x)) for x in row) for row in M]
    return "\n".join(out) + "\n"
