"""Named experiments: each turns a resolved config into checks, diagnostics and tables."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .config import deep_merge
from .errors import ConfigurationError
from .fock import DEFAULT_MAX_DIM, density_operator
from .freefermion import (
    band_chern,
    current_matrix,
    density_matrix,
    free_chern_number,
    free_kubo,
    slater_ground_state,
    single_particle,
)
from .hamiltonian import HamiltonianSpec, current_path, harper_spec, with_vector_potential
from .lattice import (
    SiteFunction,
    TorusLattice,
    boundary_path,
    build_strip_potential,
    emf_integral,
    exterior_derivative,
    horizontal_segment,
    neighborhood,
    polyline_dual_path,
    standard_flux_form,
)
from .response import _curvature, curvature_gauge_check, fit_linear_rate, hall_equivalence, kubo_time_integral
from .dynamics import adiabatic_response, emf_experiment
from .spectral import ground_state


@dataclass
class Outcome:
    results: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def check(self, name: str, value, tolerance, passed: bool) -> None:
        self.results.append({"name": name, "value": value, "tolerance": tolerance, "pass": bool(passed)})

    def table(self, name: str, columns: list[str], rows: list[list]) -> None:
        self.tables[name] = {"columns": list(columns), "rows": [list(r) for r in rows]}

    def timed(self, stage: str, t0: float) -> None:
        self.timings[stage] = self.timings.get(stage, 0.0) + time.perf_counter() - t0


@dataclass(frozen=True)
class Scenario:
    name: str
    statement: str
    defaults: dict
    run: Callable[[dict], Outcome]


BASE_DEFAULTS = {
    "seed": 0,
    "model": {"L": 4, "N": None, "t": 1.0, "p": 1, "q": 4, "U": 0.0, "mu": 0.0, "impurity": 0.0,
              "engine": "auto"},
    "geometry": {"E": 0.1, "ell": 1, "d": None, "r": None, "variant": "flat-flanks",
                 "path": {"kind": "horizontal", "height": 0.5, "bump": 2}},
    "numerics": {"grid": 24, "dt": None, "tolerance": 0.3, "noise_floor": 1e-12, "amplitude": 1.0,
                 "dense_cap": 4000, "max_dim": DEFAULT_MAX_DIM, "gap_floor": 1e-6, "plots": False},
}


# ---------------------------------------------------------------------------
# model helpers


def flux_denominator(model: dict, L: int) -> int:
    return L if model["q"] == "L" else int(model["q"])


def particle_number(model: dict, L: int, index: int = 0) -> int:
    """``model.N`` (an integer, a per-size list, or ``None`` for the filled lowest band)."""
    N = model.get("N")
    if isinstance(N, list):
        if index >= len(N):
            raise ConfigurationError(f"model.N lists {len(N)} particle numbers but size #{index + 1} was requested")
        return int(N[index])
    if N is not None:
        return int(N)
    q = flux_denominator(model, L)
    if (L * L) % q:
        raise ConfigurationError(f"lowest band filling needs q={q} to divide L^2={L * L}")
    return L * L // q


def build_model(cfg: dict, L: int | None = None, index: int = 0, U: float | None = None) -> HamiltonianSpec:
    m = cfg["model"]
    L = int(m["L"] if L is None else L)
    q = flux_denominator(m, L)
    lat = TorusLattice(L)
    onsite = np.zeros(lat.n_sites)
    onsite[lat.index((0, 0))] = m["impurity"]
    return harper_spec(L, m["t"], 2 * np.pi * m["p"] / q, m["U"] if U is None else U, m["mu"],
                       particle_number(m, L, index), onsite=onsite, max_dim=cfg["numerics"]["max_dim"])


def engine_for(cfg: dict, spec: HamiltonianSpec) -> str:
    e = cfg["model"]["engine"]
    if e == "auto":
        return "many-body" if spec.interactions else "free"
    if e == "free" and spec.interactions:
        raise ConfigurationError("the free-fermion engine needs U = 0")
    return e


def random_theta(rng: np.random.Generator, lattice: TorusLattice, amplitude: float) -> SiteFunction:
    return SiteFunction(lattice, amplitude * rng.uniform(-1.0, 1.0, lattice.n_sites))


def kubo(spec: HamiltonianSpec, engine: str, gamma, v: SiteFunction, eps: float = 0.0, cache=None):
    """Static Kubo response of the current through ``gamma`` to the potential ``<v, n>``."""
    if engine == "free":
        return free_kubo(spec, current_matrix(spec, gamma), density_matrix(spec, v), eps=eps)
    J = current_path(spec, gamma).operator
    return kubo_time_integral(cache, J, density_operator(spec.basis, v), eps=eps)


def many_body_cache(cfg: dict, spec: HamiltonianSpec):
    num = cfg["numerics"]
    return ground_state(with_vector_potential(spec), "full", num["gap_floor"], dense_cap=num["dense_cap"])


def model_gap(cfg: dict, spec: HamiltonianSpec, engine: str) -> float:
    if engine == "free":
        return slater_ground_state(single_particle(spec), spec.N).gap
    return many_body_cache(cfg, spec).gap


def _ratios(values: list[float]) -> list[float]:
    return [b / a if a else np.inf for a, b in zip(values, values[1:])]


# ---------------------------------------------------------------------------
# scenarios


def run_quantization(cfg: dict) -> Outcome:
    out = Outcome()
    m, num = cfg["model"], cfg["numerics"]
    sizes = num["sizes"]
    rows, devs = [], []
    cherns: dict = {}
    for i, L in enumerate(sizes):
        t0 = time.perf_counter()
        spec = build_model(cfg, L, i)
        q = flux_denominator(m, L)
        bands, rem = divmod(spec.N * q, L * L)
        if rem:
            raise ConfigurationError(f"N={spec.N} does not fill whole bands at L={L}, q={q}")
        if (q, bands) not in cherns:
            cherns[q, bands] = sum(band_chern(m["p"], q, b, num["grid"], m["t"]) for b in range(bands))
        n = cherns[q, bands]
        engine = engine_for(cfg, spec)
        kappa = _curvature(spec, engine=engine)
        dev = abs(2 * np.pi * kappa - n)
        devs.append(dev)
        rows.append([L, spec.N, engine, kappa, 2 * np.pi * kappa, n, dev])
        out.timed(f"L={L}", t0)
    out.table("L", ["L", "N", "engine", "kappa", "two_pi_kappa", "chern", "deviation"], rows)
    q0 = flux_denominator(m, sizes[0])
    bands0 = particle_number(m, sizes[0], 0) * q0 // (sizes[0] ** 2)
    coarse = sum(band_chern(m["p"], q0, b, num["grid"], m["t"]) for b in range(bands0))
    fine = sum(band_chern(m["p"], q0, b, 2 * num["grid"], m["t"]) for b in range(bands0))
    out.check("band Chern stable under grid refinement", abs(coarse - fine), 0, coarse == fine)
    if len(devs) > 1:
        worst = max(_ratios(devs))
        out.check("|2 pi kappa - n| decreases with L (largest successive ratio)", worst, 1.0, worst < 1.0)
    out.check(f"|2 pi kappa - n| at L={sizes[-1]}", devs[-1], num["tolerance"], devs[-1] <= num["tolerance"])
    L = sizes[-1]
    spec = build_model(cfg, L, len(sizes) - 1)
    if engine_for(cfg, spec) == "free":
        t0 = time.perf_counter()
        c = free_chern_number(spec, grid=max(6, num["grid"] // 2))
        out.check(f"twist-torus Chern number at L={L} equals band Chern", abs(c - n), 0, c == n)
        out.timed("twist chern", t0)
    out.diagnostics.update(chern=n, flux=f"2 pi {m['p']}/{m['q']}", deviations=devs)
    return out


def _equivalence_rows(out: Outcome, key: str, reports: list) -> None:
    cols = [key, "L", "N", "ell", "r", "d", "kappa", "chi", "normalizer", "ratio", "discrepancy",
            "relative_discrepancy"]
    rows = [[rep.diagnostics[k] if k != key else val for k in cols] for val, rep in reports]
    out.table(key, cols, rows)


def run_bulk(cfg: dict) -> Outcome:
    out = Outcome()
    geo, num = cfg["geometry"], cfg["numerics"]
    spec = build_model(cfg)
    engine = engine_for(cfg, spec)
    ds = sorted(num["d_values"])
    reports = []
    for d in ds:
        t0 = time.perf_counter()
        ell = geo["ell"] if geo["ell"] is not None else d
        rep = hall_equivalence(spec, "lemma42", E=geo["E"], ell=max(ell, d), d=d, variant="bulk",
                               engine=engine, gap_floor=num["gap_floor"])
        if rep.value is None:
            raise ConfigurationError("zero field: the Hall ratio is undefined (degenerate drive)")
        reports.append((d, rep))
        out.timed(f"d={d}", t0)
    _equivalence_rows(out, "d_value", reports)
    lo, hi = num.get("ratio_window", [1.0, 4.0])
    disc = {d: rep.value for d, rep in reports}
    for d in ds:
        if 2 * d in disc:
            ratio = disc[d] / disc[2 * d] if disc[2 * d] else np.inf
            out.check(f"discrepancy ratio d={d} -> d={2 * d} (O(1/d) predicts 2)", ratio, [lo, hi],
                      lo <= ratio <= hi)
    out.diagnostics.update(engine=engine, L=spec.lattice.L, N=spec.N,
                           kappa=reports[0][1].diagnostics["kappa"], discrepancies=[disc[d] for d in ds])
    return out


def _auto_r(L: int, ell: int, variant: str) -> int:
    if variant == "step":
        return 0
    return max(0, (L - 2 * ell - 2) // 4)


def run_traverse(cfg: dict) -> Outcome:
    out = Outcome()
    geo, num = cfg["geometry"], cfg["numerics"]
    ell = geo["ell"] or 1
    reports = []
    for i, L in enumerate(num["sizes"]):
        t0 = time.perf_counter()
        spec = build_model(cfg, L, i)
        r = geo["r"] if geo["r"] is not None else _auto_r(L, ell, geo["variant"])
        rep = hall_equivalence(spec, "thm43", E=geo["E"], ell=ell, r=r, variant=geo["variant"],
                               engine=engine_for(cfg, spec), gap_floor=num["gap_floor"])
        if rep.value is None:
            raise ConfigurationError("zero field: the Hall ratio is undefined (degenerate drive)")
        reports.append((L, rep))
        out.timed(f"L={L}", t0)
    _equivalence_rows(out, "size", reports)
    rel = [rep.diagnostics["relative_discrepancy"] for _, rep in reports]
    tol = num["tolerance"]
    L0, L1 = reports[0][0], reports[-1][0]
    out.check(f"relative discrepancy at L={L0}", rel[0], tol, rel[0] <= tol)
    if len(rel) > 1:
        out.check(f"relative discrepancy shrinks from L={L0} to L={L1} (ratio)", rel[-1] / rel[0], 1.0,
                  rel[-1] < rel[0])
    out.diagnostics.update(relative_discrepancies=rel, variant=geo["variant"], ell=ell)
    return out


def detour_path(lattice: TorusLattice, d: int, bump: int, height: float = 0.5):
    """``gamma_d`` with a rectangular detour of height ``bump`` over ``x1 in [-1/2, 3/2]``."""
    if bump == 0:
        return horizontal_segment(lattice, d, height)
    if d < 2:
        raise ConfigurationError("a detour needs d >= 2")
    y0, y1 = height, height + bump
    corners = [(-d + 0.5, y0), (-0.5, y0), (-0.5, y1), (1.5, y1), (1.5, y0), (d + 0.5, y0)]
    return polyline_dual_path(lattice, corners)


def run_deformed(cfg: dict) -> Outcome:
    out = Outcome()
    geo, num = cfg["geometry"], cfg["numerics"]
    ell = geo["ell"] or 1
    rows, rel, shifts = [], [], []
    for i, L in enumerate(num["sizes"]):
        t0 = time.perf_counter()
        spec = build_model(cfg, L, i)
        engine = engine_for(cfg, spec)
        r = geo["r"] if geo["r"] is not None else _auto_r(L, ell, geo["variant"])
        d = ell + r
        v, _ = build_strip_potential(spec.lattice, geo["E"], ell, r, geo["variant"])
        straight = horizontal_segment(spec.lattice, d, geo["path"]["height"])
        bent = detour_path(spec.lattice, d, geo["path"]["bump"], geo["path"]["height"])
        reps = [hall_equivalence(spec, "lemma44", path=g, potential=v, engine=engine,
                                 gap_floor=num["gap_floor"]) for g in (straight, bent)]
        if reps[1].value is None:
            raise ConfigurationError("potential takes equal values at both endpoints (degenerate drive)")
        c0, c1 = reps[0].diagnostics["chi"], reps[1].diagnostics["chi"]
        shift = abs(c1 - c0)
        shifts.append(shift / max(1.0, abs(c0)))
        rel.append(reps[1].diagnostics["relative_discrepancy"])
        rows.append([L, spec.N, r, len(straight), len(bent), c0, c1, shift, reps[1].diagnostics["normalizer"],
                     reps[1].diagnostics["kappa"], rel[-1]])
        out.timed(f"L={L}", t0)
    out.table("size", ["L", "N", "r", "straight_length", "detour_length", "chi_straight", "chi_detour",
                       "chi_shift", "normalizer", "kappa", "relative_discrepancy"], rows)
    floor = max(num["noise_floor"], 1e-10)
    out.check("current response independent of the path shape", max(shifts), floor, max(shifts) <= floor)
    tol = num["tolerance"]
    L0, L1 = num["sizes"][0], num["sizes"][-1]
    out.check(f"relative discrepancy of the detour path at L={L0}", rel[0], tol, rel[0] <= tol)
    if len(rel) > 1:
        out.check(f"relative discrepancy shrinks from L={L0} to L={L1} (ratio)", rel[-1] / rel[0], 1.0,
                  rel[-1] < rel[0])
    out.diagnostics.update(relative_discrepancies=rel, bump=geo["path"]["bump"])
    return out


def _ladder(cfg: dict, gap: float) -> list[float]:
    num = cfg["numerics"]
    if num.get("eps_ladder"):
        return [float(e) for e in num["eps_ladder"]]
    return [float(gap * f) for f in num["eps_over_gap"]]


def run_adiabatic(cfg: dict) -> Outcome:
    out = Outcome()
    geo, num = cfg["geometry"], cfg["numerics"]
    spec = build_model(cfg)
    engine = engine_for(cfg, spec)
    lat = spec.lattice
    rng = np.random.default_rng(cfg["seed"])
    theta = random_theta(rng, lat, num["amplitude"])
    A = exterior_derivative(theta)
    gamma = horizontal_segment(lat, geo["d"] or 1, geo["path"]["height"])
    t0 = time.perf_counter()
    if engine == "free":
        J = current_matrix(spec, gamma)
        chi_k = free_kubo(spec, J, density_matrix(spec, theta))
        gap = slater_ground_state(single_particle(spec), spec.N).gap
    else:
        cache = many_body_cache(cfg, spec)
        J = current_path(spec, gamma).operator
        chi_k = kubo_time_integral(cache, J, density_operator(spec.basis, theta))
        gap = cache.gap
    out.timed("kubo", t0)
    t0 = time.perf_counter()
    rep = adiabatic_response(spec, A, J, _ladder(cfg, gap), engine, num["dt"], num["gap_floor"])
    out.timed("propagation", t0)
    chi, err = rep.value, rep.diagnostics["error"]
    diff = abs(chi - chi_k.real)
    runs = rep.diagnostics["runs"]
    out.table("eps", ["eps", "quotient", "steps", "dt", "norm_drift"],
              [[r["eps"], q, r["steps"], r["dt"], r["norm_drift"]] for r, q in zip(runs, rep.diagnostics["quotients"])])
    out.check("|chi_ad - chi_kubo| within the extrapolation error", diff, err, diff <= err)
    drift = max(r["norm_drift"] for r in runs)
    out.check("norm drift of every run", drift, 1e-8, drift <= 1e-8)
    out.diagnostics.update(engine=engine, gap=gap, chi_kubo=chi_k.real, chi_kubo_imag=chi_k.imag, chi_ad=chi,
                           error=err, fit=rep.diagnostics["fit"])
    return out


def run_emf(cfg: dict) -> Outcome:
    out = Outcome()
    geo, num = cfg["geometry"], cfg["numerics"]
    rows, rel = [], []
    for i, L in enumerate(num["sizes"]):
        t0 = time.perf_counter()
        spec = build_model(cfg, L, i)
        engine = engine_for(cfg, spec)
        lat = spec.lattice
        if geo["path"]["kind"] != "half-torus-loop":
            raise ConfigurationError("the emf scenario drives a closed loop: use path.kind = half-torus-loop")
        X = [x for x in lat.sites if 0 <= x[0] < L // 2]
        # the flux form threading the loop
        pairs = [(standard_flux_form(k, lat) * geo["E"], g) for k in (1, 2) for g in boundary_path(lat, X)]
        pairs = [(A, g) for A, g in pairs if abs(emf_integral(A, g)) > 1e-12]
        if not pairs:
            raise ConfigurationError("no boundary loop picks up the drive")
        A, gamma = pairs[0]
        gap = model_gap(cfg, spec, engine)
        rep = emf_experiment(spec, gamma, A, geo["r"] or 0, _ladder(cfg, gap), engine, num["dt"], num["gap_floor"])
        if rep.value is None:
            raise ConfigurationError("zero electromotive force (degenerate drive)")
        dg = rep.diagnostics
        rel.append(dg["relative_discrepancy"])
        rows.append([L, spec.N, engine, dg["E"], dg["kappa"], dg["chi_ad"], dg["chi_ad_error"], dg["ratio"],
                     dg["discrepancy"], dg["relative_discrepancy"]])
        tol = num["tolerance"]
        out.check(f"relative discrepancy at L={L}", rel[-1], tol, rel[-1] <= tol)
        bar = dg["chi_ad_error"] / abs(dg["E"])
        out.check(f"|kappa - chi_ad/E| within the extrapolation error at L={L}", dg["discrepancy"], bar,
                  dg["discrepancy"] <= bar)
        out.timed(f"L={L}", t0)
    out.table("size", ["L", "N", "engine", "emf", "kappa", "chi_ad", "chi_ad_error", "ratio", "discrepancy",
                       "relative_discrepancy"], rows)
    out.diagnostics.update(relative_discrepancies=rel)
    return out


def _gauge_pair(spec, engine, rng, amplitude):
    lat = spec.lattice
    t1, t2 = random_theta(rng, lat, amplitude), random_theta(rng, lat, amplitude)
    k, kp, disc = curvature_gauge_check(spec, t1, t2, engine)
    c1 = SiteFunction(lat, np.full(lat.n_sites, 0.5 * amplitude))
    c2 = SiteFunction(lat, np.full(lat.n_sites, -0.25 * amplitude))
    _, _, exact = curvature_gauge_check(spec, c1, c2, engine)
    return k, kp, disc, exact


def run_gauge(cfg: dict) -> Outcome:
    out = Outcome()
    num = cfg["numerics"]
    floor = num["noise_floor"]
    rows, discs = [], []
    for i, L in enumerate(num["sizes"]):
        t0 = time.perf_counter()
        spec = build_model(cfg, L, i)
        engine = engine_for(cfg, spec)
        rng = np.random.default_rng([cfg["seed"], L])
        k, kp, disc, exact = _gauge_pair(spec, engine, rng, num["amplitude"])
        discs.append(disc)
        rows.append([L, spec.N, engine, k, kp, disc, exact])
        out.check(f"constant theta leaves kappa unchanged at L={L}", exact, floor, exact <= floor)
        out.timed(f"L={L}", t0)
    if len(discs) > 1:
        L0, L1 = num["sizes"][0], num["sizes"][-1]
        out.check(f"random-theta discrepancy shrinks from L={L0} to L={L1} (ratio)", discs[-1] / discs[0], 1.0,
                  discs[-1] < discs[0])
    free_rows = []
    for L in num.get("free_sizes", []):
        t0 = time.perf_counter()
        # free sizes fill the lowest band
        spec = build_model(deep_merge(cfg, {"model": {"N": None}}), L, 0, U=0.0)
        rng = np.random.default_rng([cfg["seed"], L, 1])
        k, kp, disc, exact = _gauge_pair(spec, "free", rng, num["amplitude"])
        free_rows.append([L, spec.N, "free", k, kp, disc, exact])
        out.timed(f"free L={L}", t0)
    if free_rows:
        worst = max(max(r[5], r[6]) for r in free_rows)
        bound = max(floor, 1e-10)
        out.check("free-fermion kappa gauge invariant at every size", worst, bound, worst <= bound)
    out.table("size", ["L", "N", "engine", "kappa", "kappa_gauged", "discrepancy", "exact_gauge_discrepancy"],
              rows + free_rows)
    out.diagnostics.update(discrepancies=discs)
    return out


def run_limits(cfg: dict) -> Outcome:
    out = Outcome()
    geo, num = cfg["geometry"], cfg["numerics"]
    size_rows, eps_rows, chi0s = [], [], []
    for i, L in enumerate(num["sizes"]):
        t0 = time.perf_counter()
        spec = build_model(cfg, L, i)
        engine = engine_for(cfg, spec)
        lat = spec.lattice
        rng = np.random.default_rng([cfg["seed"], L])
        theta = random_theta(rng, lat, num["amplitude"])
        gamma = horizontal_segment(lat, geo["d"] or 1, geo["path"]["height"])
        cache = many_body_cache(cfg, spec) if engine == "many-body" else None
        gap = cache.gap if cache is not None else model_gap(cfg, spec, engine)
        chi0 = kubo(spec, engine, gamma, theta, 0.0, cache)
        eps = _ladder(cfg, gap)
        chis = [kubo(spec, engine, gamma, theta, e, cache) for e in eps]
        fit = fit_linear_rate(np.array(eps), np.array([c - chi0 for c in chis]))
        chi0s.append(chi0.real)
        for e, c, C in zip(eps, chis, fit["C"]):
            eps_rows.append([L, e, e / gap, c.real, c.imag, abs(c - chi0), C])
        size_rows.append([L, spec.N, engine, gap, chi0.real, fit["C_ratio"]])
        tol = num["tolerance"]
        out.check(f"|chi(eps) - chi(0)| <= C eps with C stable at L={L} (max/min C)", fit["C_ratio"], tol,
                  fit["C_ratio"] <= tol)
        out.timed(f"L={L}", t0)
    out.table("L", ["L", "N", "engine", "gap", "chi0", "C_ratio"], size_rows)
    out.table("eps", ["L", "eps", "eps_over_gap", "chi_real", "chi_imag", "residual", "C"], eps_rows)
    out.diagnostics.update(chi0=chi0s, cross_size_drift=[b - a for a, b in zip(chi0s, chi0s[1:])])
    return out


def locality_probe(cfg: dict) -> Outcome:
    """Kubo response with the potential cut down to ``Z^r``, ``Z`` the support of the current.

    Two potentials are probed: a seeded random one, and the sign-aligned
    ``theta_x = amplitude * sign(chi_{J, n_x})`` for which the truncation
    error is largest among potentials bounded by ``amplitude``.
    """
    out = Outcome()
    geo, num = cfg["geometry"], cfg["numerics"]
    spec = build_model(cfg)
    engine = engine_for(cfg, spec)
    lat = spec.lattice
    amp = num["amplitude"]
    rng = np.random.default_rng(cfg["seed"])
    theta = random_theta(rng, lat, amp)
    gamma = horizontal_segment(lat, geo["d"] or 1, geo["path"]["height"])
    Z = sorted(gamma.sites())
    cache = many_body_cache(cfg, spec) if engine == "many-body" else None
    radii = sorted(num["r_values"])
    if radii[-1] > lat.L:
        raise ConfigurationError(f"radius {radii[-1]} exceeds the lattice (L={lat.L})")
    t0 = time.perf_counter()
    eye = np.eye(lat.n_sites)
    kernel = np.array([kubo(spec, engine, gamma, SiteFunction(lat, eye[i]), 0.0, cache).real
                       for i in range(lat.n_sites)])
    aligned = SiteFunction(lat, amp * np.sign(kernel))
    out.timed("kernel", t0)

    def truncated(v: SiteFunction, Zr) -> complex:
        mask = np.zeros(lat.n_sites)
        mask[sorted(lat.index(x) for x in Zr)] = 1.0
        return kubo(spec, engine, gamma, SiteFunction(lat, v.values * mask), 0.0, cache)

    t0 = time.perf_counter()
    full_random = kubo(spec, engine, gamma, theta, 0.0, cache)
    full_aligned = kubo(spec, engine, gamma, aligned, 0.0, cache)
    cover = int(np.ceil(lat.distances_to(Z).max()))
    rows, worst, rand = [], [], []
    for r in radii + [cover]:
        Zr = neighborhood(lat, Z, r)
        worst.append(abs(full_aligned - truncated(aligned, Zr)))
        rand.append(abs(full_random - truncated(theta, Zr)))
        rows.append([r, len(Zr), worst[-1], rand[-1]])
    out.timed("truncations", t0)
    out.table("r", ["r", "sites_in_Zr", "discrepancy_aligned", "discrepancy_random"], rows)
    floor = num["noise_floor"]
    scale = max(1.0, abs(full_aligned))
    rise = max([b - a for a, b in zip(worst[:len(radii)], worst[1:len(radii)])], default=0.0)
    out.check("aligned-potential discrepancy non-increasing in r (largest rise)", rise, floor * scale,
              rise <= floor * scale)
    if len(radii) > 1:
        out.check(f"discrepancy decays from r={radii[0]} to r={radii[-1]} (ratio)",
                  worst[len(radii) - 1] / worst[0] if worst[0] else 0.0, 1.0,
                  worst[len(radii) - 1] < worst[0] or worst[0] == 0.0)
    excess = max(a - b for a, b in zip(rand, worst))
    out.check("random-potential discrepancy bounded by the aligned one", excess, floor * scale,
              excess <= floor * scale)
    out.check("Z^r covering the torus reproduces chi exactly", worst[-1], floor * scale, worst[-1] <= floor * scale)
    dist = lat.distances_to(Z)
    far = dist > 2 * spec.interaction_range
    remote = float(np.dot(kernel[far], theta.values[far]))
    out.diagnostics.update(engine=engine, chi_random=full_random.real, chi_aligned=full_aligned.real,
                           discrepancies_aligned=worst, discrepancies_random=rand,
                           disjoint_sites=int(far.sum()), disjoint_response=abs(remote))
    return out


def _defaults(**blocks) -> dict:
    return deep_merge(BASE_DEFAULTS, blocks)


SCENARIOS: dict[str, Scenario] = {
    s.name: s
    for s in [
        Scenario(
            "quantization",
            "2 pi kappa of a filled Harper band approaches its band Chern number as L grows",
            _defaults(model={"p": 1, "q": 4}, numerics={"sizes": [4, 8, 12], "tolerance": 0.15}),
            run_quantization,
        ),
        Scenario(
            "kubo-vs-curvature-bulk",
            "Hall ratio of a current inside a uniform field strip tends to kappa like 1/d",
            _defaults(model={"L": 36}, geometry={"ell": None},
                      numerics={"d_values": [2, 4, 8], "ratio_window": [1.0, 4.0]}),
            run_bulk,
        ),
        Scenario(
            "kubo-vs-curvature-traverse",
            "Hall ratio of a current traversing the potential step equals kappa up to fast-decaying terms",
            _defaults(numerics={"sizes": [8, 12, 16, 20]}),
            run_traverse,
        ),
        Scenario(
            "kubo-vs-curvature-deformed",
            "Hall ratio is independent of the shape of the path and tends to kappa",
            _defaults(numerics={"sizes": [12, 16, 20], "noise_floor": 1e-10}),
            run_deformed,
        ),
        Scenario(
            "adiabatic-vs-kubo",
            "adiabatic response to an exact drive equals the Kubo response to its potential",
            _defaults(model={"L": 3, "N": 2, "q": 3, "U": 0.5, "impurity": 3.0}, geometry={"d": 1},
                      numerics={"eps_over_gap": [1 / 40, 1 / 56, 1 / 80, 1 / 113, 1 / 160], "dt": 0.1}),
            run_adiabatic,
        ),
        Scenario(
            "emf",
            "adiabatic current through a loop divided by the electromotive force equals kappa",
            _defaults(geometry={"E": 0.5, "r": 0, "path": {"kind": "half-torus-loop"}},
                      numerics={"sizes": [4, 8], "eps_over_gap": [1 / 20, 1 / 40, 1 / 80], "dt": 0.05}),
            run_emf,
        ),
        Scenario(
            "gauge-invariance",
            "kappa does not depend on the choice of twist one-forms beyond terms vanishing with L",
            _defaults(model={"N": [2, 3], "q": "L", "U": 0.5, "impurity": 3.0},
                      numerics={"sizes": [3, 4], "free_sizes": [4, 6, 8]}),
            run_gauge,
        ),
        Scenario(
            "limit-commutation",
            "the regularised Kubo response converges linearly in eps uniformly in L",
            _defaults(model={"N": [2, 3], "q": "L", "U": 0.5, "impurity": 3.0}, geometry={"d": 1},
                      numerics={"sizes": [3, 4], "eps_over_gap": [1 / 4, 1 / 8, 1 / 16], "tolerance": 2.0}),
            run_limits,
        ),
        Scenario(
            "locality",
            "Kubo response is insensitive to the potential far from where the current is measured",
            _defaults(model={"L": 6, "q": 3}, geometry={"d": 1}, numerics={"r_values": [0, 1, 2]}),
            locality_probe,
        ),
    ]
}
