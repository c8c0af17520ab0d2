"""Flow feature extraction: N-first vectors, bursts, flow statistics,
Netflow v5/v9 emulations, byte-burst k-grams, and the feature matrix.

Conventions: initiator direction is positive; short series are right
zero-padded (real sizes are never 0, directions are never 0, so padding
is unambiguous); byte bursts carry direction in their sign when both
directions are kept and plain magnitudes under one-sided filters.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSpecError
from .flows import Direction, Flow, FlowLabels
from .pcapio import Transport

LABEL_COLUMNS = ["label_class", "label_tunnel", "label_app", "label_mtu", "label_dataset"]


class DirectionFilter(str, enum.Enum):
    BOTH = "both"
    INITIATOR = "initiator"
    RESPONDER = "responder"


@dataclass(frozen=True)
class StatSummary:
    total: float
    min: float
    max: float
    mean: float
    std: float
    q25: float
    q50: float
    q75: float


def stat_summary(series) -> StatSummary:
    """Summarize a series: population std, linearly interpolated quartiles,
    all-zero summary for an empty series."""
    arr = np.asarray(series, dtype=np.float64)
    if arr.size == 0:
        return StatSummary(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    q25, q50, q75 = np.quantile(arr, [0.25, 0.5, 0.75])
    return StatSummary(
        total=float(arr.sum()),
        min=float(arr.min()),
        max=float(arr.max()),
        mean=float(arr.mean()),
        std=float(arr.std()),
        q25=float(q25),
        q50=float(q50),
        q75=float(q75),
    )


@dataclass(frozen=True)
class Burst:
    """Maximal run of consecutive same-direction packets."""

    direction: Direction
    packet_count: int
    byte_total: int


def _burst_runs(flow: Flow):
    """(run_signs, packet_counts, byte_totals) over both directions."""
    signs = flow.dir_signs
    change = np.flatnonzero(signs[1:] != signs[:-1]) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [len(signs)]))
    counts = ends - starts
    totals = np.add.reduceat(flow.sizes, starts)
    return signs[starts], counts, totals


def compute_bursts(flow: Flow, filt: DirectionFilter = DirectionFilter.BOTH) -> list[Burst]:
    """Group consecutive same-direction packets into bursts.

    One-sided filters keep grouping over both directions and then drop
    the bursts of the other direction.
    """
    run_signs, counts, totals = _burst_runs(flow)
    bursts = [
        Burst(Direction(int(s)), int(c), int(t))
        for s, c, t in zip(run_signs, counts, totals)
    ]
    if filt == DirectionFilter.INITIATOR:
        bursts = [b for b in bursts if b.direction == Direction.FROM_INITIATOR]
    elif filt == DirectionFilter.RESPONDER:
        bursts = [b for b in bursts if b.direction == Direction.FROM_RESPONDER]
    return bursts


class FeatureFamily(str, enum.Enum):
    SIZE = "size"
    DIRECTION = "direction"
    SIGNED_SIZE = "signed_size"
    IAT = "iat"
    ELAPSED = "elapsed"
    PACKET_BURST = "packet_burst"
    BYTE_BURST = "byte_burst"
    BYTE_BURST_2GRAM = "byte_burst_2gram"
    BYTE_BURST_3GRAM = "byte_burst_3gram"
    FLOW_STATS = "flow_stats"
    NETFLOW_V5 = "netflow_v5"
    NETFLOW_V9 = "netflow_v9"


NFIRST_FAMILIES = {
    FeatureFamily.SIZE,
    FeatureFamily.DIRECTION,
    FeatureFamily.SIGNED_SIZE,
    FeatureFamily.IAT,
    FeatureFamily.ELAPSED,
    FeatureFamily.PACKET_BURST,
    FeatureFamily.BYTE_BURST,
}
KGRAM_FAMILIES = {
    FeatureFamily.BYTE_BURST_2GRAM: 2,
    FeatureFamily.BYTE_BURST_3GRAM: 3,
}
STATS_FAMILIES = {
    FeatureFamily.FLOW_STATS,
    FeatureFamily.NETFLOW_V5,
    FeatureFamily.NETFLOW_V9,
}


def _filtered(arr: np.ndarray, signs: np.ndarray, filt: DirectionFilter) -> np.ndarray:
    if filt == DirectionFilter.BOTH:
        return arr
    want = 1 if filt == DirectionFilter.INITIATOR else -1
    return arr[signs == want]


def _byte_burst_series(flow: Flow, filt: DirectionFilter) -> np.ndarray:
    run_signs, _, totals = _burst_runs(flow)
    if filt == DirectionFilter.BOTH:
        return (totals * run_signs).astype(np.float64)
    want = 1 if filt == DirectionFilter.INITIATOR else -1
    return totals[run_signs == want].astype(np.float64)


def _nfirst_series(flow: Flow, family: FeatureFamily, filt: DirectionFilter) -> np.ndarray:
    signs = flow.dir_signs
    if family == FeatureFamily.SIZE:
        return _filtered(flow.sizes, signs, filt).astype(np.float64)
    if family == FeatureFamily.DIRECTION:
        return _filtered(signs, signs, filt).astype(np.float64)
    if family == FeatureFamily.SIGNED_SIZE:
        return _filtered(flow.signed_sizes, signs, filt).astype(np.float64)
    if family == FeatureFamily.IAT:
        ts = _filtered(flow.ts_micros, signs, filt)
        return np.diff(ts) / 1e6
    if family == FeatureFamily.ELAPSED:
        ts = _filtered(flow.ts_micros, signs, filt)
        return (ts - flow.start_ts) / 1e6
    if family == FeatureFamily.PACKET_BURST:
        run_signs, counts, _ = _burst_runs(flow)
        if filt != DirectionFilter.BOTH:
            want = 1 if filt == DirectionFilter.INITIATOR else -1
            counts = counts[run_signs == want]
        return counts.astype(np.float64)
    if family == FeatureFamily.BYTE_BURST:
        return _byte_burst_series(flow, filt)
    raise ValueError(f"{family} is not an N-first family")


def _pad(series: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(n, dtype=np.float64)
    m = min(len(series), n)
    out[:m] = series[:m]
    return out


def nfirst_vector(flow: Flow, family: FeatureFamily, n: int,
                  filt: DirectionFilter = DirectionFilter.BOTH) -> np.ndarray:
    """First n values of the family's per-packet (or per-burst) series,
    right zero-padded. IAT starts at the second packet; one-sided filters
    restrict the series before truncation."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return _pad(_nfirst_series(flow, family, filt), n)


def kgram_vector(burst_values, k: int, n: int) -> np.ndarray:
    """Sliding windows (b_i..b_{i+k-1}) for i = 0..n-1, flattened, with
    zero padding where the series runs out."""
    if k not in (2, 3):
        raise ValueError("k must be 2 or 3")
    if n < 1:
        raise ValueError("n must be >= 1")
    values = np.asarray(burst_values, dtype=np.float64)
    out = np.zeros(k * n, dtype=np.float64)
    for i in range(n):
        window = values[i : i + k]
        out[i * k : i * k + len(window)] = window
    return out


_FLOW_STATS_NAMES = [
    "pkt_count", "size_total", "size_min", "size_max", "size_mean", "size_std",
    "duration", "iat_min", "iat_max", "iat_mean", "iat_std",
]


def flow_stats_features(flow: Flow) -> tuple[list[str], np.ndarray]:
    """All-direction flow statistics: packet count, size total/min/max/
    mean/std, duration, IAT min/max/mean/std."""
    sizes = stat_summary(flow.sizes)
    iats = stat_summary(np.diff(flow.ts_micros) / 1e6)
    values = np.array([
        flow.n_packets,
        sizes.total, sizes.min, sizes.max, sizes.mean, sizes.std,
        flow.duration_s,
        iats.min, iats.max, iats.mean, iats.std,
    ], dtype=np.float64)
    return list(_FLOW_STATS_NAMES), values


def netflow_v5_features(flow: Flow, variant: str = "base") -> tuple[list[str], np.ndarray]:
    """Netflow v5 emulation: count, byte total, mean size, duration;
    'ext' appends mean IAT."""
    _check_variant(variant)
    sizes = stat_summary(flow.sizes)
    names = ["pkt_count", "byte_total", "size_mean", "duration"]
    values = [flow.n_packets, sizes.total, sizes.mean, flow.duration_s]
    if variant == "ext":
        names.append("iat_mean")
        values.append(stat_summary(np.diff(flow.ts_micros) / 1e6).mean)
    return names, np.array(values, dtype=np.float64)


def netflow_v9_features(flow: Flow, variant: str = "base") -> tuple[list[str], np.ndarray]:
    """Netflow v9 emulation: count and byte total over all directions,
    min/max size on incoming (responder-to-initiator) packets, duration;
    'ext' also splits count and byte total per direction."""
    _check_variant(variant)
    incoming = stat_summary(flow.sizes[flow.dir_signs == -1])
    names = ["pkt_count", "byte_total", "size_min_in", "size_max_in", "duration"]
    values = [
        flow.n_packets,
        float(flow.sizes.sum()),
        incoming.min,
        incoming.max,
        flow.duration_s,
    ]
    if variant == "ext":
        init = flow.dir_signs == 1
        names += ["pkt_count_init", "pkt_count_resp", "byte_total_init", "byte_total_resp"]
        values += [
            int(init.sum()),
            int((~init).sum()),
            float(flow.sizes[init].sum()),
            float(flow.sizes[~init].sum()),
        ]
    return names, np.array(values, dtype=np.float64)


def _check_variant(variant: str):
    if variant not in ("base", "ext"):
        raise InvalidSpecError(f"netflow variant must be 'base' or 'ext', got {variant!r}")


@dataclass(frozen=True)
class FamilySpec:
    family: FeatureFamily
    n: int | None = None
    direction: DirectionFilter = DirectionFilter.BOTH
    variant: str | None = None

    def __post_init__(self):
        if self.family in NFIRST_FAMILIES or self.family in KGRAM_FAMILIES:
            if self.n is None or self.n < 1:
                raise InvalidSpecError(f"{self.family.value} needs n >= 1")
            if self.variant is not None:
                raise InvalidSpecError(f"{self.family.value} takes no variant")
        else:
            if self.n is not None:
                raise InvalidSpecError(f"{self.family.value} takes no n")
            if self.direction != DirectionFilter.BOTH:
                raise InvalidSpecError(
                    f"{self.family.value} defines its own direction handling"
                )
            if self.family in (FeatureFamily.NETFLOW_V5, FeatureFamily.NETFLOW_V9):
                _check_variant(self.variant or "")
            elif self.variant is not None:
                raise InvalidSpecError(f"{self.family.value} takes no variant")

    def column_names(self) -> list[str]:
        fam = self.family.value
        if self.family in NFIRST_FAMILIES:
            return [f"{fam}[{self.direction.value}]_{i}" for i in range(self.n)]
        if self.family in KGRAM_FAMILIES:
            k = KGRAM_FAMILIES[self.family]
            return [f"{fam}[{self.direction.value}]_{i}" for i in range(k * self.n)]
        if self.family == FeatureFamily.FLOW_STATS:
            return [f"flow_stats[both]_{name}" for name in _FLOW_STATS_NAMES]
        names = list(_NETFLOW_NAMES[self.family][self.variant])
        return [f"{fam}[{self.variant}]_{name}" for name in names]

    def compute(self, flow: Flow) -> np.ndarray:
        if self.family in NFIRST_FAMILIES:
            return nfirst_vector(flow, self.family, self.n, self.direction)
        if self.family in KGRAM_FAMILIES:
            series = _byte_burst_series(flow, self.direction)
            return kgram_vector(series, KGRAM_FAMILIES[self.family], self.n)
        if self.family == FeatureFamily.FLOW_STATS:
            return flow_stats_features(flow)[1]
        return _STATS_BUILDERS[self.family](flow, self.variant)[1]

    def describe(self) -> str:
        parts = [self.family.value]
        if self.n is not None:
            parts.append(str(self.n))
        if self.variant is not None:
            parts.append(self.variant)
        if self.direction != DirectionFilter.BOTH:
            parts.append(self.direction.value)
        return ":".join(parts)


_STATS_BUILDERS = {
    FeatureFamily.NETFLOW_V5: netflow_v5_features,
    FeatureFamily.NETFLOW_V9: netflow_v9_features,
}

_NETFLOW_NAMES = {
    FeatureFamily.NETFLOW_V5: {
        "base": ["pkt_count", "byte_total", "size_mean", "duration"],
        "ext": ["pkt_count", "byte_total", "size_mean", "duration", "iat_mean"],
    },
    FeatureFamily.NETFLOW_V9: {
        "base": ["pkt_count", "byte_total", "size_min_in", "size_max_in", "duration"],
        "ext": [
            "pkt_count", "byte_total", "size_min_in", "size_max_in", "duration",
            "pkt_count_init", "pkt_count_resp", "byte_total_init", "byte_total_resp",
        ],
    },
}


@dataclass
class FeatureSpec:
    """Ordered feature family list plus the trailing protocol one-hot."""

    families: list[FamilySpec]
    append_protocol_onehot: bool = True
    name: str | None = None

    def __post_init__(self):
        seen = set()
        for fam in self.families:
            key = (fam.family, fam.n, fam.direction, fam.variant)
            if key in seen:
                raise InvalidSpecError(f"duplicate family in spec: {fam.describe()}")
            seen.add(key)

    def column_names(self) -> list[str]:
        names: list[str] = []
        for fam in self.families:
            names.extend(fam.column_names())
        if self.append_protocol_onehot:
            names += ["proto_tcp", "proto_udp"]
        return names

    def width(self) -> int:
        return len(self.column_names())

    def describe(self) -> str:
        if self.name:
            return self.name
        return ",".join(f.describe() for f in self.families)


@dataclass
class FeatureMatrix:
    """Row-per-flow numeric matrix with a stable, named column contract."""

    column_names: list[str]
    values: np.ndarray
    labels: list[FlowLabels] = field(default_factory=list)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    def label_values(self, which: str) -> list:
        return [getattr(lab, which) for lab in self.labels]

    def select(self, row_mask) -> "FeatureMatrix":
        idx = np.flatnonzero(row_mask)
        return FeatureMatrix(
            column_names=list(self.column_names),
            values=self.values[idx],
            labels=[self.labels[i] for i in idx],
        )


def build_matrix(flows: list[Flow], spec: FeatureSpec) -> FeatureMatrix:
    """Materialize a feature matrix: one row per flow, columns in spec
    order, protocol one-hot last, labels copied through."""
    if not flows:
        raise ValueError("build_matrix needs at least one flow")
    names = spec.column_names()
    out = np.zeros((len(flows), len(names)), dtype=np.float64)
    for r, flow in enumerate(flows):
        col = 0
        for fam in spec.families:
            vec = fam.compute(flow)
            out[r, col : col + len(vec)] = vec
            col += len(vec)
        if spec.append_protocol_onehot:
            out[r, col] = 1.0 if flow.key.proto == Transport.TCP else 0.0
            out[r, col + 1] = 1.0 if flow.key.proto == Transport.UDP else 0.0
    if not np.all(np.isfinite(out)):
        raise ValueError("feature matrix contains non-finite values")
    return FeatureMatrix(names, out, [flow.labels for flow in flows])


# named specs

def fs2_spec(n: int = 50) -> FeatureSpec:
    """Signed packet sizes plus byte bursts, the selected combination."""
    return FeatureSpec(
        families=[
            FamilySpec(FeatureFamily.SIGNED_SIZE, n=n),
            FamilySpec(FeatureFamily.BYTE_BURST, n=n),
        ],
        name=f"fs2:{n}",
    )


def parse_spec(text: str, default_n: int = 50) -> FeatureSpec:
    """Parse a compact spec string.

    Comma-separated tokens, each ``family[:arg[:arg]]`` where an integer
    arg sets n, ``base``/``ext`` sets the netflow variant, and
    ``initiator``/``responder``/``both`` sets the direction filter.
    ``fs2[:n]`` expands to the signed-size + byte-burst combination.
    """
    families: list[FamilySpec] = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        parts = token.split(":")
        head, args = parts[0], parts[1:]
        if head == "fs2":
            n = int(args[0]) if args else default_n
            families.extend(fs2_spec(n).families)
            continue
        try:
            family = FeatureFamily(head)
        except ValueError:
            raise InvalidSpecError(f"unknown feature family {head!r}") from None
        n = None
        direction = DirectionFilter.BOTH
        variant = None
        for arg in args:
            if arg.isdigit():
                n = int(arg)
            elif arg in ("base", "ext"):
                variant = arg
            elif arg in tuple(d.value for d in DirectionFilter):
                direction = DirectionFilter(arg)
            else:
                raise InvalidSpecError(f"bad spec argument {arg!r} in {token!r}")
        if family in NFIRST_FAMILIES or family in KGRAM_FAMILIES:
            n = n if n is not None else default_n
        if family in (FeatureFamily.NETFLOW_V5, FeatureFamily.NETFLOW_V9) and variant is None:
            variant = "base"
        families.append(FamilySpec(family, n=n, direction=direction, variant=variant))
    if not families:
        raise InvalidSpecError(f"empty feature spec {text!r}")
    return FeatureSpec(families=families, name=text)


# CSV interchange

def write_csv(matrix: FeatureMatrix, path) -> None:
    """Write the matrix with label columns; reals at 9 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(matrix.column_names + LABEL_COLUMNS)
        for i in range(matrix.n_rows):
            lab = matrix.labels[i] if matrix.labels else FlowLabels()
            row = [f"{v:.9g}" for v in matrix.values[i]]
            row += [
                lab.traffic_class or "",
                lab.tunnel_kind or "",
                lab.app_kind or "",
                "" if lab.mtu is None else str(lab.mtu),
                lab.dataset_tag or "",
            ]
            writer.writerow(row)


def read_csv(path) -> FeatureMatrix:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[-5:] != LABEL_COLUMNS:
            raise InvalidSpecError(f"{path}: missing label columns in CSV header")
        names = header[:-5]
        rows = []
        labels = []
        for row in reader:
            rows.append([float(v) for v in row[: len(names)]])
            cls, tun, app, mtu, tag = row[len(names):]
            labels.append(FlowLabels(
                traffic_class=cls or None,
                tunnel_kind=tun or None,
                app_kind=app or None,
                mtu=int(mtu) if mtu else None,
                dataset_tag=tag or None,
            ))
    values = np.array(rows, dtype=np.float64) if rows else np.zeros((0, len(names)))
    return FeatureMatrix(names, values, labels)
