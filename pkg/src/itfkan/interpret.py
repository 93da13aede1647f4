"""Post-training interpretability: pruning, symbolification, reports.

Pruning zeroes every adjustable edge whose L2 norm falls below a
threshold; fixed-form injected edges are exempt and excluded from the
counts. Symbolification fits each surviving edge activation with the best
library formula c * f(a*x + b) + d over the input range the edge actually
received (recorded by a calibration forward pass, padded 10%), ranking
candidates by coefficient of determination on held-out sample points.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .tensor import Tensor, no_grad

FIT_SAMPLES = 257  # odd: alternating points split into fit / held-out sets
A_GRID = np.logspace(-2, 1, 41)
B_POINTS = 41
REFINE_ROUNDS = 3
REFINE_POINTS = 21


def _sigmoid(u):
    return 1.0 / (1.0 + np.exp(-u))


FAMILIES = {
    "identity": lambda u: u,
    "square": lambda u: u * u,
    "cube": lambda u: u * u * u,
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "gaussian": lambda u: np.exp(-(u * u)),
    "silu": lambda u: u * _sigmoid(u),
    "constant": None,  # handled separately
}
FAMILY_ORDER = [
    "identity", "square", "cube", "sin", "cos", "exp", "gaussian", "silu", "constant",
]


@dataclass
class SymbolicFit:
    family: str
    a: float
    b: float
    c: float
    d: float
    r2: float


@dataclass
class PruneRow:
    network: str
    layer: str
    pruned: int
    preserved: int
    total: int

    @property
    def ratio(self):
        return self.pruned / self.total if self.total else 0.0


# --- pruning -------------------------------------------------------------------

def _prune_layer(layer, tau):
    keep = layer.taylor_norms() >= tau
    layer.apply_prune(keep)
    preserved = int(layer.active.sum())
    return layer.n_adjustable - preserved, preserved


def prune(model, tau):
    """Zero low-norm adjustable edges in every KAN; returns report rows."""
    if tau < 0:
        raise ValueError("prune threshold must be >= 0")
    rows = []
    for net_name, net in (("TrendKAN", model.trend_kan), ("SeasonalKAN", model.seasonal_kan)):
        for li, layer in enumerate(net.layers):
            pruned, preserved = _prune_layer(layer, tau)
            rows.append(PruneRow(net_name, str(li), pruned, preserved, layer.n_adjustable))
    tf_pruned = tf_preserved = tf_total = 0
    for sub in model.tf_kans.nets:
        layer = sub.layers[0]
        pruned, preserved = _prune_layer(layer, tau)
        tf_pruned += pruned
        tf_preserved += preserved
        tf_total += layer.n_adjustable
    rows.append(PruneRow("TFKAN", "-", tf_pruned, tf_preserved, tf_total))
    return rows


# --- calibration ------------------------------------------------------------------

def calibrate_ranges(model, inputs, batch_size=64):
    """Forward the (W, N, L) windows, recording per-node input ranges for
    every KAN layer; returns {(tag, layer_idx): (lo, hi)}."""
    probe = {}
    with no_grad():
        for start in range(0, len(inputs), batch_size):
            xb = inputs[start : start + batch_size]
            rows = xb.shape[0] * xb.shape[1]
            model.forward(Tensor(xb.reshape(rows, xb.shape[2])), probe=probe)
    return probe


def padded_range(lo, hi, pad=0.1):
    span = hi - lo
    return lo - pad * span, hi + pad * span


# --- symbolic fitting ---------------------------------------------------------------

def _closed_form(u, y):
    """Least-squares (c, d) for y ~ c*u + d, with a degenerate-u guard."""
    n = len(y)
    su = u.sum()
    suu = float(u @ u)
    suy = float(u @ y)
    sy = y.sum()
    det = n * suu - su * su
    if not np.isfinite(det) or det <= 1e-12 * max(1.0, n * suu):
        c = 0.0
        d = sy / n
    else:
        c = (n * suy - su * sy) / det
        d = (sy - c * su) / n
    resid = y - c * u - d
    return c, d, float(resid @ resid)


def _score(func, x, y, a, b):
    with np.errstate(over="ignore", invalid="ignore"):
        u = func(a * x + b)
    if not np.all(np.isfinite(u)):
        return np.inf, 0.0, 0.0
    c, d, ss = _closed_form(u, y)
    return ss, c, d


def _row_scores(func, x, y, a_rows, b_rows):
    """Vectorized residuals of the closed-form (c, d) fit for candidate
    (a, b) rows; non-finite rows score inf."""
    n = len(y)
    sy = y.sum()
    with np.errstate(over="ignore", invalid="ignore"):
        u_rows = func(np.outer(a_rows, x) + np.asarray(b_rows)[:, None])
    finite = np.isfinite(u_rows).all(axis=1)
    u_rows = np.where(np.isfinite(u_rows), u_rows, 0.0)
    su = u_rows.sum(axis=1)
    suu = np.einsum("ij,ij->i", u_rows, u_rows)
    suy = u_rows @ y
    det = n * suu - su * su
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.where(
            det > 1e-12 * np.maximum(1.0, n * suu), (n * suy - su * sy) / det, 0.0
        )
    d = (sy - c * su) / n
    resid = y[None, :] - c[:, None] * u_rows - d[:, None]
    ss = np.einsum("ij,ij->i", resid, resid)
    ss[~finite] = np.inf
    return ss


def _grid_search(func, x, y, x_absmax):
    best = (np.inf, 1.0, 0.0)  # (ss, a, b)
    for a in np.concatenate([A_GRID, -A_GRID]):
        span = max(np.pi, abs(a) * x_absmax)
        bs = np.linspace(-span, span, B_POINTS)
        ss = _row_scores(func, x, y, np.full(B_POINTS, a), bs)
        idx = int(np.argmin(ss))
        if ss[idx] < best[0]:
            best = (float(ss[idx]), float(a), float(bs[idx]))
    return best


def _parabolic_step(ts, ss, idx):
    if idx == 0 or idx == len(ts) - 1:
        return None
    t0, t1, t2 = ts[idx - 1], ts[idx], ts[idx + 1]
    s0, s1, s2 = ss[idx - 1], ss[idx], ss[idx + 1]
    denom = (t1 - t0) * (s1 - s2) - (t1 - t2) * (s1 - s0)
    if denom == 0 or not np.isfinite(denom):
        return None
    return t1 - 0.5 * ((t1 - t0) ** 2 * (s1 - s2) - (t1 - t2) ** 2 * (s1 - s0)) / denom


def _sweep(score_rows, center, step):
    """Scan a window around ``center``, then try the parabolic vertex."""
    ts = center + np.linspace(-step, step, REFINE_POINTS)
    ss = score_rows(ts)
    idx = int(np.argmin(ss))
    best_t, best_ss = ts[idx], ss[idx]
    vertex = _parabolic_step(ts, ss, idx)
    if vertex is not None:
        cand = score_rows(np.array([vertex]))[0]
        if cand < best_ss:
            best_t, best_ss = vertex, cand
    return best_t, best_ss


def _refine(func, x, y, a, b, x_absmax, rounds=REFINE_ROUNDS):
    """Coordinate descent around the best grid cell; (c, d) stay closed-form.

    Each round alternates a/b sweeps at a fixed window size until the
    residual stalls, then shrinks the window. The (a, b) valley is often
    diagonal (e.g. trig phase/frequency coupling), so single sweeps per
    round stall far from the optimum.
    """
    log_step = np.log(10.0) * 3.0 / 40.0  # grid spacing in log|a|
    b_step = 2.0 * max(np.pi, abs(a) * x_absmax) / (B_POINTS - 1)
    sign = 1.0 if a >= 0 else -1.0
    la = np.log(abs(a)) if a != 0 else np.log(1e-8)
    ss_best = _score(func, x, y, sign * np.exp(la), b)[0]
    for _ in range(rounds):
        for _ in range(16):
            previous = ss_best
            la, ss_a = _sweep(
                lambda ts: _row_scores(
                    func, x, y, sign * np.exp(ts), np.full(len(ts), b)
                ),
                la,
                log_step,
            )
            b, ss_best = _sweep(
                lambda ts: _row_scores(
                    func, x, y, np.full(len(ts), sign * np.exp(la)), ts
                ),
                b,
                b_step,
            )
            ss_best = min(ss_best, ss_a)
            if not np.isfinite(ss_best) or previous - ss_best <= 1e-12 * max(previous, 1e-30):
                break
        log_step /= 8.0
        b_step /= 8.0
    return sign * np.exp(la), b


def _fit_family(name, x_fit, y_fit, x_val, y_val, x_absmax):
    func = FAMILIES[name]
    if name == "constant":
        d = float(np.mean(y_fit))
        a, b, c = 0.0, 0.0, 0.0
        pred_val = np.full_like(y_val, d)
    else:
        _, a, b = _grid_search(func, x_fit, y_fit, x_absmax)
        a, b = _refine(func, x_fit, y_fit, a, b, x_absmax)
        _, c, d = _score(func, x_fit, y_fit, a, b)
        with np.errstate(over="ignore", invalid="ignore"):
            pred_val = c * func(a * x_val + b) + d
        if not np.all(np.isfinite(pred_val)):
            return SymbolicFit(name, a, b, c, d, 0.0)
    ss_res = float(np.sum((y_val - pred_val) ** 2))
    ss_tot = float(np.sum((y_val - y_val.mean()) ** 2))
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res <= 1e-24 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return SymbolicFit(name, float(a), float(b), float(c), float(d), max(0.0, r2))


def symbolify_edge(edge_fn, lo, hi, n_samples=FIT_SAMPLES):
    """Best-matching library formula for a scalar function on [lo, hi].

    Fitting uses alternating sample points; the reported R2 comes from the
    held-out alternates. Degenerate (constant) samples return the constant
    family with R2 = 1.
    """
    if n_samples < 64:
        raise ValueError("need at least 64 sample points")
    if hi < lo:
        raise ValueError(f"empty domain [{lo}, {hi}]")
    if hi - lo < 1e-12:
        value = float(np.asarray(edge_fn(np.array([lo])))[0])
        return SymbolicFit("constant", 0.0, 0.0, 0.0, value, 1.0)
    xs = np.linspace(lo, hi, n_samples)
    ys = np.asarray(edge_fn(xs), dtype=np.float64)
    if np.ptp(ys) == 0.0:
        return SymbolicFit("constant", 0.0, 0.0, 0.0, float(ys[0]), 1.0)
    x_fit, y_fit = xs[::2], ys[::2]
    x_val, y_val = xs[1::2], ys[1::2]
    x_absmax = max(abs(lo), abs(hi))
    best = None
    for name in FAMILY_ORDER:
        fit = _fit_family(name, x_fit, y_fit, x_val, y_val, x_absmax)
        if best is None or fit.r2 > best.r2 + 1e-12:
            best = fit
    return best


def render_fit(fit, decimals=2):
    """Text form c*f(a x + b) + d, matching the report's 2-decimal style."""
    if fit.family == "constant":
        return f"{fit.c + fit.d:.{decimals}f}"
    inner = f"{fit.a:.{decimals}f}x"
    if round(fit.b, decimals) != 0.0:
        inner += f"{fit.b:+.{decimals}f}"
    bodies = {
        "identity": f"({inner})",
        "square": f"({inner})^2",
        "cube": f"({inner})^3",
        "sin": f"sin({inner})",
        "cos": f"cos({inner})",
        "exp": f"exp({inner})",
        "gaussian": f"exp(-({inner})^2)",
        "silu": f"silu({inner})",
    }
    return f"{fit.c:.{decimals}f}{bodies[fit.family]}{fit.d:+.{decimals}f}"


# --- report generation ------------------------------------------------------------


@dataclass
class EdgeRecord:
    network: str
    layer: str          # qualified: "trend.0", "seasonal.1", "tf.p3"
    i: int
    j: int
    kind: str           # "taylor" | "trend-poly" | "fourier"
    l2: float
    fit: Optional[SymbolicFit]
    formula: str
    highlight: bool = False


def _network_records(net_name, tag, layers, probe):
    records = []
    for li, layer in enumerate(layers):
        ranges = probe.get((tag, li))
        label = f"{tag}.{li}" if not tag.startswith("tf.") else tag
        for i in range(layer.in_dim):
            if ranges is not None:
                lo, hi = padded_range(ranges[0][i], ranges[1][i])
            else:
                lo, hi = -1.0, 1.0
            for j in range(layer.out_dim):
                r = layer.inject_rows
                edge = layer.edge(i, j)
                if j < r:
                    kind = "trend-poly" if layer.inject_kind == "trend" else "fourier"
                    records.append(
                        EdgeRecord(
                            net_name, label, i, j, kind,
                            edge.l2_norm(), None, edge.formula(),
                        )
                    )
                elif layer.active[j - r, i]:
                    fit = symbolify_edge(edge, lo, hi)
                    records.append(
                        EdgeRecord(
                            net_name, label, i, j, "taylor",
                            edge.l2_norm(), fit, render_fit(fit),
                        )
                    )
    return records


def generate_report(model, tau, top_m, calib_inputs, batch_size=64):
    """Prune at tau, then symbolify surviving adjustable edges and render
    injected ones exactly. Returns (prune_rows, edge_records)."""
    probe = calibrate_ranges(model, calib_inputs, batch_size=batch_size)
    prune_rows = prune(model, tau)
    records = []
    records += _network_records("TrendKAN", "trend", model.trend_kan.layers, probe)
    records += _network_records(
        "SeasonalKAN", "seasonal", model.seasonal_kan.layers, probe
    )
    for p, sub in enumerate(model.tf_kans.nets):
        records += _network_records("TFKAN", f"tf.p{p}", sub.layers, probe)
    records.sort(key=lambda r: (r.network, r.layer, -r.l2, r.i, r.j))
    for net_name in ("TrendKAN", "SeasonalKAN", "TFKAN"):
        candidates = sorted(
            (r for r in records if r.network == net_name and r.kind == "taylor"),
            key=lambda r: -r.l2,
        )
        for r in candidates[:top_m]:
            r.highlight = True
    return prune_rows, records


# --- file rendering ----------------------------------------------------------------

def format_prune_report(rows):
    lines = ["network\tlayer\tpruned\tpreserved\ttotal\tratio"]
    for r in rows:
        lines.append(
            f"{r.network}\t{r.layer}\t{r.pruned}\t{r.preserved}\t{r.total}"
            f"\t{100.0 * r.ratio:.2f}%"
        )
    return "\n".join(lines) + "\n"


def format_symbolic_report(records, top_m):
    lines = [
        "symbolic report: c*f(a x + b) + d per surviving edge, "
        "sorted by edge norm within each layer",
        f"highlights: top {top_m} edges per network by L2 norm (*)",
        "",
        "network\tlayer\ti\tj\tformula\tl2norm\tr2\thighlight",
    ]
    for r in records:
        r2 = f"{r.fit.r2:.4f}" if r.fit is not None else "exact"
        mark = "*" if r.highlight else ""
        lines.append(
            f"{r.network}\t{r.layer}\t{r.i}\t{r.j}\t{r.formula}\t{r.l2:.6e}\t{r2}\t{mark}"
        )
    return "\n".join(lines) + "\n"


def format_machine_report(records):
    lines = ["layer\ti\tj\tfamily\ta\tb\tc\td\tr2\tl2norm"]
    for r in records:
        if r.fit is not None:
            fam, a, b, c, d, r2 = (
                r.fit.family, r.fit.a, r.fit.b, r.fit.c, r.fit.d, r.fit.r2,
            )
        else:
            fam, a, b, c, d, r2 = r.kind, 0.0, 0.0, 1.0, 0.0, 1.0
        lines.append(
            f"{r.layer}\t{r.i}\t{r.j}\t{fam}\t{a!r}\t{b!r}\t{c!r}\t{d!r}\t{r2!r}\t{r.l2!r}"
        )
    return "\n".join(lines) + "\n"


def format_graph_description(model, records):
    """Node and surviving-edge listing consumable by external plotting."""
    lines = ["type\tnetwork\tlayer\ti\tj\tl2norm\thighlight"]
    seen_layers = set()
    for r in records:
        if (r.network, r.layer) not in seen_layers:
            seen_layers.add((r.network, r.layer))
    for net_name, layer in sorted(seen_layers):
        lines.append(f"layer\t{net_name}\t{layer}\t\t\t\t")
    for r in records:
        lines.append(
            f"edge\t{r.network}\t{r.layer}\t{r.i}\t{r.j}\t{r.l2!r}"
            f"\t{1 if r.highlight else 0}"
        )
    return "\n".join(lines) + "\n"
