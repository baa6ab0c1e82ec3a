"""Word-ball enumeration of finitely generated matrix groups and the orbit
dataset file format shared with the synthetic generator.

Dataset files are UTF-8 text with LF endings::

    #cpd 1
    #group sl2xsl2
    #factors 2,2
    #rank 2
    #form trace
    #gens 3f9a...
    #maxlen 8
    #dedup exact
    0,0,0,0,0
    1,1,-1,0,0
    ...

Each record line is ``word_length,mu_1,...,mu_d`` with reals printed to 17
significant digits, so files round-trip bit-exactly.  Synthetic datasets use
``#group synthetic`` and add ``#rmax`` and ``#model`` lines.  Lines starting
with ``##`` are free-form comments and are ignored on reading.
"""

from __future__ import annotations

import hashlib
import io
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from growthspec.cartan import MAX_ENTRY, CartanError, GroupElement, project_blocks
from growthspec.chamber import FORM_LABEL, GroupDescriptor, RootSystem, build_root_system

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
DEFAULT_RECORD_CAP = 5_000_000
# relative quantum of the float-mode bucket key, and the tolerance for
# identifying two matrices that share a bucket
FLOAT_BUCKET = 1e-7
FLOAT_MATCH = 1e-9


class DatasetFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


class EnumerationError(RuntimeError):
    pass


class EnumerationOverflow(EnumerationError):
    def __init__(self, message: str, word: str):
        self.word = word
        super().__init__(f"{message} (word {word})")


class DedupCollision(EnumerationError):
    pass


class RecordCapExceeded(EnumerationError):
    pass


# -- generators ---------------------------------------------------------


@dataclass
class GeneratorSet:
    elements: list[GroupElement]
    labels: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.elements:
            raise ValueError("generator set is empty")
        if not self.labels:
            self.labels = [f"g{i}" for i in range(len(self.elements))]
        if len(self.labels) != len(self.elements):
            raise ValueError("one label per generator required")

    @property
    def integral(self) -> bool:
        return all(g.exact is not None for g in self.elements)

    def check(self, rs: RootSystem) -> None:
        for lab, g in zip(self.labels, self.elements):
            try:
                g.check(rs)
            except CartanError as exc:
                raise ValueError(f"generator {lab}: {exc}") from None

    def normalized(self) -> "GeneratorSet":
        """Append missing inverses, labelled ``<label>^-1``."""
        elems, labels = list(self.elements), list(self.labels)
        for g, lab in zip(self.elements, self.labels):
            inv = g.inverse()
            if not any(_same_element(inv, h) for h in elems):
                elems.append(inv)
                labels.append(f"{lab}^-1")
        return GeneratorSet(elems, labels)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for lab, g in zip(self.labels, self.elements):
            h.update(lab.encode())
            for b in g.blocks:
                h.update(",".join(f"{x:.17g}" for x in b.ravel()).encode())
                h.update(b"|")
        return h.hexdigest()[:16]


def _same_element(a: GroupElement, b: GroupElement) -> bool:
    if a.exact is not None and b.exact is not None:
        return all(np.array_equal(x, y) for x, y in zip(a.exact, b.exact))
    return all(np.allclose(x, y, rtol=0, atol=FLOAT_MATCH) for x, y in zip(a.blocks, b.blocks))


def parse_generators(text: str) -> GeneratorSet:
    """Parse generator lines ``n:a11,...,ann | n:...`` (one element per line).

    Blank lines and ``#`` comments are skipped.  An optional leading
    ``label=`` names the generator.
    """
    elems, labels = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        label = f"g{len(elems)}"
        if "=" in line:
            label, line = (p.strip() for p in line.split("=", 1))
        mats = []
        for part in line.split("|"):
            try:
                n_txt, entries = part.split(":", 1)
                n = int(n_txt)
                vals = [_number(v) for v in entries.split(",")]
            except ValueError:
                raise DatasetFormatError(f"malformed generator factor {part.strip()!r}", lineno) from None
            if len(vals) != n * n:
                raise DatasetFormatError(f"expected {n * n} entries, got {len(vals)}", lineno)
            mats.append(np.array(vals).reshape(n, n))
        elems.append(GroupElement.from_matrices(*mats))
        labels.append(label)
    if not elems:
        raise DatasetFormatError("no generators found")
    return GeneratorSet(elems, labels)


def _number(text: str):
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        return float(text)


def read_generators(path) -> GeneratorSet:
    return parse_generators(Path(path).read_text(encoding="utf-8"))


# -- dataset ------------------------------------------------------------


@dataclass(frozen=True)
class DatasetHeader:
    group: str
    factors: tuple[int, ...]
    rank: int
    gens: str
    maxlen: int
    dedup: str
    form: str = FORM_LABEL
    rmax: float | None = None
    model: str | None = None

    @property
    def synthetic(self) -> bool:
        return self.group == "synthetic"


@dataclass(frozen=True)
class OrbitRecord:
    word_length: int
    mu: np.ndarray
    norm: float
    rho_pairing: float


@dataclass(eq=False)
class OrbitDataset:
    header: DatasetHeader
    word_length: np.ndarray
    mu: np.ndarray
    norm: np.ndarray = field(init=False)
    rho_pairing: np.ndarray = field(init=False)

    def __post_init__(self):
        self.word_length = np.asarray(self.word_length, dtype=np.int64)
        self.mu = np.asarray(self.mu, dtype=float).reshape(len(self.word_length), -1)
        rs = self.root_system
        if self.mu.shape[1] != rs.ambient_dim:
            raise ValueError(f"records have {self.mu.shape[1]} coordinates, group needs {rs.ambient_dim}")
        self.norm = rs.norm(self.mu)
        self.rho_pairing = rs.rho_pairing(self.mu)

    @property
    def root_system(self) -> RootSystem:
        return build_root_system(GroupDescriptor(self.header.factors))

    def __len__(self) -> int:
        return len(self.word_length)

    @property
    def records(self) -> Iterator[OrbitRecord]:
        for i in range(len(self)):
            yield OrbitRecord(int(self.word_length[i]), self.mu[i], float(self.norm[i]), float(self.rho_pairing[i]))

    def sorted(self) -> "OrbitDataset":
        order = np.lexsort(tuple(self.mu[:, j] for j in range(self.mu.shape[1] - 1, -1, -1))
                           + (self.norm, self.word_length))
        return OrbitDataset(self.header, self.word_length[order], self.mu[order])

    def radius_limit(self) -> float:
        """Largest norm up to which the dataset is believed complete.

        Synthetic data is complete up to its generation radius.  A word ball
        is taken to be complete up to the smallest norm on its outermost
        sphere; if that sphere is empty the group was exhausted.
        """
        if self.header.rmax is not None:
            return float(self.header.rmax)
        if len(self) == 0:
            return 0.0
        outer = self.word_length == self.header.maxlen
        if self.header.maxlen == 0:
            return 0.0
        if not np.any(outer):
            return float(self.norm.max())
        return float(self.norm[outer].min())

    def record_set(self) -> set[tuple]:
        return {(int(w), *m.tolist()) for w, m in zip(self.word_length, self.mu)}


def write_dataset(ds: OrbitDataset, path, notes: Sequence[str] = ()) -> None:
    Path(path).write_bytes(dataset_bytes(ds, notes))


def dataset_bytes(ds: OrbitDataset, notes: Sequence[str] = ()) -> bytes:
    """Serialized dataset; ``notes`` become ``##`` comment lines after the header."""
    h = ds.header
    lines = [
        f"#cpd {FORMAT_VERSION}",
        f"#group {h.group}",
        f"#factors {','.join(map(str, h.factors))}",
        f"#rank {h.rank}",
        f"#form {h.form}",
        f"#gens {h.gens}",
        f"#maxlen {h.maxlen}",
        f"#dedup {h.dedup}",
    ]
    if h.rmax is not None:
        lines.append(f"#rmax {h.rmax:.17g}")
    if h.model is not None:
        lines.append(f"#model {h.model}")
    lines.extend(f"## {n}" for n in notes)
    buf = io.StringIO()
    buf.write("\n".join(lines) + "\n")
    if len(ds):
        table = np.column_stack([ds.word_length.astype(float), ds.mu])
        fmt = ["%d"] + ["%.17g"] * ds.mu.shape[1]
        np.savetxt(buf, table, fmt=fmt, delimiter=",", newline="\n")
    return buf.getvalue().encode("utf-8")


def fingerprint_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


_HEADER_KEYS = ("group", "factors", "rank", "form", "gens", "maxlen", "dedup", "rmax", "model")


def read_dataset(path) -> OrbitDataset:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if not lines or not lines[0].startswith("#cpd"):
        raise DatasetFormatError("missing '#cpd' version line", 1)
    try:
        version = int(lines[0].split()[1])
    except (IndexError, ValueError):
        raise DatasetFormatError("malformed version line", 1) from None
    if version != FORMAT_VERSION:
        raise DatasetFormatError(f"unsupported format version {version}", 1)
    fields: dict[str, tuple[str, int]] = {}
    first_record = len(lines)
    for i, line in enumerate(lines[1:], start=2):
        if not line.startswith("#"):
            first_record = i - 1
            break
        if line.startswith("##"):
            continue
        key, _, value = line[1:].partition(" ")
        if key not in _HEADER_KEYS:
            raise DatasetFormatError(f"unknown header field {key!r}", i)
        fields[key] = (value.strip(), i)
    for key in ("group", "rank", "form", "gens", "maxlen", "dedup"):
        if key not in fields:
            raise DatasetFormatError(f"missing header field '#{key}'")

    def parse(key, conv):
        value, lineno = fields[key]
        try:
            return conv(value)
        except ValueError:
            raise DatasetFormatError(f"malformed '#{key}' value {value!r}", lineno) from None

    group = fields["group"][0]
    if "factors" in fields:
        factors = parse("factors", lambda v: tuple(int(x) for x in v.split(",")))
    else:
        factors = parse("group", lambda v: GroupDescriptor.parse(v).factors)
    try:
        desc = GroupDescriptor(factors)
    except ValueError as exc:
        raise DatasetFormatError(str(exc), fields.get("factors", fields["group"])[1]) from None
    rank = parse("rank", int)
    if rank != desc.rank:
        raise DatasetFormatError(f"rank {rank} does not match group rank {desc.rank}", fields["rank"][1])
    form = fields["form"][0]
    if form != FORM_LABEL:
        raise DatasetFormatError(f"unsupported inner product {form!r}", fields["form"][1])
    header = DatasetHeader(
        group=group,
        factors=desc.factors,
        rank=rank,
        gens=fields["gens"][0],
        maxlen=parse("maxlen", int),
        dedup=fields["dedup"][0],
        form=form,
        rmax=parse("rmax", float) if "rmax" in fields else None,
        model=fields["model"][0] if "model" in fields else None,
    )
    body = "\n".join(lines[first_record:])
    ncol = desc.ambient_dim + 1
    if body.strip():
        try:
            table = np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2, dtype=float)
        except ValueError as exc:
            raise DatasetFormatError(f"malformed record: {exc}") from None
        if table.shape[1] != ncol:
            raise DatasetFormatError(f"records have {table.shape[1]} columns, expected {ncol}", first_record + 1)
    else:
        table = np.zeros((0, ncol))
    return OrbitDataset(header, table[:, 0].astype(np.int64), table[:, 1:])


# -- enumeration --------------------------------------------------------


def predicted_ball_bound(n_symmetric: int, max_length: int) -> int:
    """Size of the ball of radius L in a free group on a symmetric set of size s."""
    s = n_symmetric
    if s <= 1:
        return 1 + s * max_length
    return 1 + sum(s * (s - 1) ** (j - 1) for j in range(1, max_length + 1))


class _Deduper:
    """Membership for group elements, exact (integer) or bucketed float.

    Float keys round each factor block to a grid of ``FLOAT_BUCKET`` times
    the power of two just above that block's norm.  Keeping the magnitude in
    the key matters: high powers of one hyperbolic matrix are nearly
    proportional, so a norm-relative key would merge them.  Blocks are scaled
    separately so a small factor is not swamped by a large one.
    """

    def __init__(self, exact: bool, sizes: Sequence[int] = ()):
        self.exact = exact
        bounds = np.cumsum([0] + [n * n for n in sizes])
        self.slices = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]
        self.seen: dict = {}

    def _scales(self, flats: np.ndarray) -> np.ndarray:
        cols = []
        for sl in self.slices:
            norm = np.maximum(np.linalg.norm(flats[:, sl], axis=1), 1.0)
            cols.append(np.repeat(norm[:, None], sl.stop - sl.start, axis=1))
        return np.concatenate(cols, axis=1)

    def keys(self, flats: np.ndarray) -> list:
        if self.exact:
            if flats.dtype == object:
                return [tuple(int(x) for x in row) for row in flats]
            arr = np.ascontiguousarray(flats)
            return [row.tobytes() for row in arr]
        quantum = np.exp2(np.ceil(np.log2(self._scales(flats)))) * FLOAT_BUCKET
        arr = np.round(flats / quantum).astype(np.int64)
        return [row.tobytes() for row in arr]

    def add(self, key, flat: np.ndarray) -> bool:
        """Insert; return False if the element is already present."""
        if self.exact:
            if key in self.seen:
                return False
            self.seen[key] = []
            return True
        bucket = self.seen.get(key)
        if bucket is None:
            self.seen[key] = [flat]
            return True
        scale = self._scales(flat[None])[0]
        for other in bucket:
            rel = float(np.max(np.abs(other - flat) / scale))
            if rel <= FLOAT_MATCH:
                return False
        raise DedupCollision(
            f"distinct matrices share a dedup bucket (relative difference {rel:.3g}); "
            "precision is insufficient for float deduplication"
        )

    def add_all(self, flats: np.ndarray) -> None:
        for k, f in zip(self.keys(flats), flats):
            self.add(k, f)


def _flatten(blocks) -> np.ndarray:
    return np.concatenate([b.reshape(len(b), -1) for b in blocks], axis=1)


def _unflatten(flats: np.ndarray, sizes) -> list[np.ndarray]:
    out, start = [], 0
    for n in sizes:
        out.append(flats[:, start:start + n * n].reshape(-1, n, n))
        start += n * n
    return out


def _product_chunk(blocks, gen_blocks):
    """Right products w * g, parent-major and generator-minor: shape (m*G, D)."""
    m = len(blocks[0])
    per_gen = [_flatten([np.matmul(b, g) for b, g in zip(blocks, gb)]) for gb in gen_blocks]
    return np.stack(per_gen, axis=1).reshape(m * len(gen_blocks), -1)


def enumerate_ball(
    rs: RootSystem,
    gens: GeneratorSet,
    max_length: int,
    dedup: str = "auto",
    record_cap: int = DEFAULT_RECORD_CAP,
    size_guard: bool = True,
    threads: int = 1,
    checkpoint=None,
) -> OrbitDataset:
    """Breadth-first word ball of radius ``max_length`` with Cartan projections.

    Each distinct group element appears once, tagged with its BFS depth.  In
    a Cayley graph the neighbours of sphere k lie in spheres k-1..k+1, so only
    two spheres of keys are kept in memory.  With ``checkpoint`` set, state
    is saved after every completed sphere and a later call with the same
    inputs resumes from it.
    """
    if max_length < 0:
        raise ValueError("max_length must be >= 0")
    gens.check(rs)
    gens = gens.normalized()
    if dedup == "auto":
        dedup = "exact" if gens.integral else "float"
    if dedup not in ("exact", "float"):
        raise ValueError(f"unknown dedup mode {dedup!r}")
    exact = dedup == "exact"
    if exact and not gens.integral:
        raise ValueError("exact dedup needs integer generators")
    if size_guard:
        bound = predicted_ball_bound(len(gens.elements), max_length)
        if bound > record_cap:
            raise RecordCapExceeded(
                f"predicted ball size up to {bound} exceeds the record cap {record_cap}; "
                "raise the cap explicitly (or disable the size guard) to proceed"
            )
    fp = gens.fingerprint()
    header = DatasetHeader(str(rs.descriptor), rs.descriptor.factors, rs.rank, fp, max_length, dedup)

    # exact arithmetic uses int64 while the worst-case entry growth fits,
    # Python integers beyond that
    g_max = max(max(float(np.abs(b).max()) for b in g.blocks) for g in gens.elements)
    fits = max_length * np.log2(max(rs.descriptor.factors) * max(g_max, 1.0)) < 62
    dtype = (np.int64 if fits else object) if exact else float
    gen_blocks = [tuple((g.exact if exact else g.blocks)[f].astype(dtype) for f in range(len(rs.descriptor.factors)))
                  for g in gens.elements]
    gen_max = max(float(np.abs(b).max()) for gb in gen_blocks for b in gb)
    nmax = max(rs.descriptor.factors)
    sizes = rs.descriptor.factors

    state = _load_checkpoint(checkpoint, fp, dedup, sizes) if checkpoint else None
    if state is not None and state[0] > max_length:
        state = None
    if state is None:
        cur = [np.eye(n, dtype=dtype)[None] for n in sizes]
        prev = [np.zeros((0, n, n), dtype=dtype) for n in sizes]
        depth = 0
        mus = [project_blocks(rs, cur)]
        wls = [np.zeros(1, dtype=np.int64)]
        parents = np.array([-1], dtype=np.int64)
        letters = np.array([-1], dtype=np.int64)
        offset = 0
    else:
        depth, prev, cur, mus, wls, parents, letters, offset = state
        mus, wls = [mus], [wls]

    def word_of(idx: int) -> str:
        out = []
        while idx >= 0 and parents[idx] >= 0:
            out.append(gens.labels[letters[idx]])
            idx = int(parents[idx])
        return "*".join(reversed(out)) or "e"

    total = sum(len(w) for w in wls)
    n_gens = len(gen_blocks)
    while depth < max_length:
        dd = _Deduper(exact, sizes)
        for blocks in (prev, cur):
            if len(blocks[0]):
                dd.add_all(_flatten(blocks))
        if dtype is np.int64:
            row_max = _flatten(cur).__abs__().max(axis=1)
            if row_max.max() * gen_max * nmax >= 2.0**62:
                raise EnumerationOverflow("integer matrix entries would overflow int64",
                                          word_of(offset + int(np.argmax(row_max))))
        n_cur = len(cur[0])
        bounds = np.linspace(0, n_cur, max(1, min(threads, n_cur)) + 1).astype(int)
        chunks = [[b[lo:hi] for b in cur] for lo, hi in zip(bounds[:-1], bounds[1:])]
        if threads > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(lambda c: _product_chunk(c, gen_blocks), chunks))
        else:
            results = [_product_chunk(c, gen_blocks) for c in chunks]
        cand = np.concatenate(results) if results else np.zeros((0, sum(n * n for n in sizes)), dtype=dtype)
        if not exact:
            big = np.abs(cand).max(axis=1) if len(cand) else np.zeros(0)
            bad = ~np.isfinite(big) | (big > MAX_ENTRY)
            if np.any(bad):
                j = int(np.argmax(bad))
                raise EnumerationOverflow("matrix entries overflow",
                                          word_of(offset + j // n_gens) + "*" + gens.labels[j % n_gens])
        keep = [j for j, (k, f) in enumerate(zip(dd.keys(cand), cand)) if dd.add(k, f)]
        keep = np.array(keep, dtype=np.int64)
        depth += 1
        nxt = _unflatten(cand[keep], sizes)
        total += len(keep)
        if total > record_cap:
            raise RecordCapExceeded(f"ball exceeded the record cap {record_cap} at depth {depth}")
        mus.append(project_blocks(rs, nxt) if len(keep) else np.zeros((0, rs.ambient_dim)))
        wls.append(np.full(len(keep), depth, dtype=np.int64))
        parents = np.concatenate([parents, offset + keep // n_gens])
        letters = np.concatenate([letters, keep % n_gens])
        offset += n_cur
        prev, cur = cur, nxt
        log.info("sphere %d: %d elements (total %d)", depth, len(keep), total)
        if checkpoint:
            _save_checkpoint(checkpoint, fp, dedup, depth, prev, cur,
                             np.concatenate(mus), np.concatenate(wls), parents, letters, offset)
        if len(keep) == 0:
            break

    ds = OrbitDataset(header, np.concatenate(wls), np.concatenate(mus))
    return ds.sorted()


def _save_checkpoint(path, fp, dedup, depth, prev, cur, mu, wl, parents, letters, offset):
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        np.savez(
            fh, fp=np.array(fp), dedup=np.array(dedup), depth=depth, offset=offset,
            mu=mu, wl=wl, parents=parents, letters=letters,
            **{f"prev{i}": _storable(b) for i, b in enumerate(prev)},
            **{f"cur{i}": _storable(b) for i, b in enumerate(cur)},
        )
    os.replace(tmp, path)


def _storable(b: np.ndarray) -> np.ndarray:
    # arbitrary-precision integers go to disk as decimal strings, not pickles
    return b.astype(str) if b.dtype == object else b


def _restored(b: np.ndarray) -> np.ndarray:
    if b.dtype.kind == "U":
        return np.vectorize(int, otypes=[object])(b) if b.size else b.astype(object)
    return b


def _load_checkpoint(path, fp, dedup, sizes):
    if not Path(path).exists():
        return None
    with np.load(path) as z:
        if str(z["fp"]) != fp or str(z["dedup"]) != dedup:
            raise EnumerationError("checkpoint belongs to a different generator set or dedup mode")
        prev = [_restored(z[f"prev{i}"]) for i in range(len(sizes))]
        cur = [_restored(z[f"cur{i}"]) for i in range(len(sizes))]
        return (int(z["depth"]), prev, cur, z["mu"], z["wl"], z["parents"], z["letters"], int(z["offset"]))


def with_header(ds: OrbitDataset, **changes) -> OrbitDataset:
    return OrbitDataset(replace(ds.header, **changes), ds.word_length, ds.mu)
