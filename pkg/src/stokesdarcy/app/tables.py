"""Iteration-count sweeps: mesh robustness, parameter robustness, Neumann-Neumann comparison."""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

from ..fem import ParameterWarning
from .runner import ExperimentConfig, run_algorithm1

TABLE1_RESOLUTIONS = (8, 16, 32, 64)
TABLE2_EXPONENTS = (4, 2, 0, -2, -4)
TABLE2_RESOLUTION = 64
TABLE3_PARAMS = (1.0, 0.1, 0.01)
TABLE3_RESOLUTIONS = tuple(7 * 2 ** i for i in range(5))


@dataclass
class TableEntry:
    config: dict
    iterations: Optional[int] = None
    converged: bool = False
    n_lambda: Optional[int] = None
    n_total: Optional[int] = None
    conservation_ok: Optional[bool] = None
    error: Optional[str] = None

    def cell(self) -> str:
        if self.error is not None:
            return "ERR"
        return f"{self.iterations}" + ("" if self.converged else "*")


@dataclass
class TableResult:
    name: str
    entries: list = field(default_factory=list)
    text: str = ""

    def to_csv(self, path=None) -> str:
        keys = sorted({k for e in self.entries for k in e.config})
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(keys + ["iterations", "converged", "n_lambda", "n_total", "conservation_ok", "error"])
        for e in self.entries:
            w.writerow([e.config.get(k, "") for k in keys]
                       + [e.iterations, e.converged, e.n_lambda, e.n_total, e.conservation_ok,
                          e.error or ""])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def lookup(self, **kw) -> TableEntry:
        for e in self.entries:
            if all(e.config.get(k) == v for k, v in kw.items()):
                return e
        raise KeyError(kw)


def _run_entry(cfg: ExperimentConfig, extra: dict) -> TableEntry:
    config = dict(case=cfg.case, resolution=cfg.resolution, mu=cfg.mu, K=cfg.K,
                  precond=cfg.precond, **extra)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ParameterWarning)
            rep, *_ = run_algorithm1(cfg)
    except Exception as exc:  # recorded, sweep continues
        return TableEntry(config=config, error=f"{type(exc).__name__}: {exc}")
    return TableEntry(config=config, iterations=rep.iterations, converged=rep.converged,
                      n_lambda=rep.n_lambda, n_total=rep.n_total,
                      conservation_ok=rep.conservation.passed)


def _grid(rows, cols, cell: Callable, row_label: str, col_labels, title: str) -> str:
    head = [row_label] + list(col_labels)
    body = [[str(r)] + [cell(r, c) for c in cols] for r in rows]
    widths = [max(len(x[i]) for x in [head] + body) for i in range(len(head))]
    fmt = lambda xs: " | ".join(x.rjust(w) for x, w in zip(xs, widths))
    sep = "-+-".join("-" * w for w in widths)
    return "\n".join([title, fmt(head), sep] + [fmt(b) for b in body])


def table1(resolutions=TABLE1_RESOLUTIONS, tol: float = 1e-6, max_iter: int = 200,
           precond: str = "spectral", progress: Optional[Callable] = None) -> TableResult:
    res = TableResult("table1")
    for r in resolutions:
        for case in ("case1", "case2"):
            e = _run_entry(ExperimentConfig(case=case, resolution=r, tol=tol, max_iter=max_iter,
                                            precond=precond), {})
            res.entries.append(e)
            if progress:
                progress(e)

    def n_of(r, attr):
        for e in res.entries:
            if e.config["resolution"] == r and getattr(e, attr) is not None:
                return f"{getattr(e, attr):,}"
        return "ERR"

    head = ["1/h", "n_total", "n_lambda", "case 1", "case 2"]
    rows = [[str(r), n_of(r, "n_total"), n_of(r, "n_lambda"),
             res.lookup(case="case1", resolution=r).cell(),
             res.lookup(case="case2", resolution=r).cell()] for r in resolutions]
    widths = [max(len(x[i]) for x in [head] + rows) for i in range(5)]
    fmt = lambda xs: " | ".join(x.rjust(w) for x, w in zip(xs, widths))
    res.text = "\n".join(["iterations vs mesh size (mu = K = 1)", fmt(head),
                          "-+-".join("-" * w for w in widths)] + [fmt(x) for x in rows])
    return res


def table2(resolution: int = TABLE2_RESOLUTION, exponents=TABLE2_EXPONENTS, cases=("case1", "case2"),
           tol: float = 1e-6, max_iter: int = 200, precond: str = "spectral",
           progress: Optional[Callable] = None) -> TableResult:
    """Grid over (kappa, mu) with K = kappa / mu."""
    res = TableResult("table2")
    for case in cases:
        for ek in exponents:
            for em in sorted(exponents):
                kappa, mu = 10.0 ** ek, 10.0 ** em
                cfg = ExperimentConfig(case=case, resolution=resolution, mu=mu, K=kappa / mu,
                                       tol=tol, max_iter=max_iter, precond=precond)
                e = _run_entry(cfg, {"log_kappa": ek, "log_mu": em})
                res.entries.append(e)
                if progress:
                    progress(e)
    parts = []
    for case in cases:
        parts.append(_grid(
            exponents, sorted(exponents),
            lambda ek, em: res.lookup(case=case, log_kappa=ek, log_mu=em).cell(),
            "log kappa \\ log mu", [str(m) for m in sorted(exponents)],
            f"{case}: iterations at 1/h = {resolution}"))
    res.text = "\n\n".join(parts)
    return res


def table3(resolutions=TABLE3_RESOLUTIONS, values=TABLE3_PARAMS, tol: float = 1e-6,
           max_iter: int = 200, pairs=None, progress: Optional[Callable] = None) -> TableResult:
    """Neumann-Neumann against the spectral preconditioner on the manufactured problem."""
    res = TableResult("table3")
    pairs = pairs or [(mu, K) for mu in values for K in values]
    for mu, K in pairs:
        for precond in ("nn", "spectral"):
            for r in resolutions:
                cfg = ExperimentConfig(case="manufactured", resolution=r, mu=mu, K=K, tol=tol,
                                       max_iter=max_iter, precond=precond)
                e = _run_entry(cfg, {})
                res.entries.append(e)
                if progress:
                    progress(e)
    cols = [(p, r) for p in ("nn", "spectral") for r in resolutions]
    res.text = _grid(
        pairs, cols,
        lambda pk, c: res.lookup(mu=pk[0], K=pk[1], precond=c[0], resolution=c[1]).cell(),
        "(mu, K)", [f"{p}:{r}" for p, r in cols],
        "iterations: Neumann-Neumann vs spectral (columns precond:1/h)")
    return res


TABLES = {"table1": table1, "table2": table2, "table3": table3}
