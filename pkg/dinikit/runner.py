"""Scenario runner: stage DAG, checks, artifacts and the report."""

import logging
import threading
import time
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Set

import numpy as np

from .config import Settings, load_settings
from .exceptions import DiniKitError, StageError
from .families import DataSet, coefficient_modulus, generate_coefficients
from .fields import ScalarField
from .geometry import GraphDomain
from .harness import (
    DecayStudy,
    c2_global_pipeline,
    decay_study,
    modulus_bound_compare,
    sample_half_ball,
)
from .modulus import ZeroModulus, classify, modulus_table_csv
from .oblique import ObliqueField, ObliqueProblem, reduce_to_neumann
from .oscillation import empirical_continuity_modulus
from .registry import get_family
from .scenario import (
    CheckResult,
    CheckSpec,
    Report,
    Scenario,
    environment_fingerprint,
    scenario_hash,
)
from .solvers import (
    DiscreteSolution,
    HalfBall,
    SmoothHalfBall,
    solve_conormal,
    solve_mixed_nd,
)
from .store import BaseArtifactStore, InMemoryArtifactStore
from .tracing import StageKind, Tracer

logger = logging.getLogger(__name__)

STAGE_DEPENDENCIES: Dict[str, List[str]] = {
    "modulus": [],
    "solve": [],
    "harness": ["solve"],
    "bounds": ["harness"],
    "reduce": [],
    "c2": ["reduce"],
}

CHECK_STAGES: Dict[str, str] = {
    "classification": "modulus",
    "coefficient_modulus": "modulus",
    "solution_error": "solve",
    "decay_band": "harness",
    "decay_floor": "harness",
    "one_step_stability": "harness",
    "bound_coverage": "bounds",
    "flat_trace": "reduce",
    "c2_bound": "c2",
}

STAGE_KINDS: Dict[str, StageKind] = {
    "modulus": StageKind.CHECK,
    "solve": StageKind.SOLVE,
    "harness": StageKind.HARNESS,
    "bounds": StageKind.BOUND,
    "reduce": StageKind.FLATTEN,
    "c2": StageKind.BOUND,
}

C2_SAMPLES = 32


def required_stages(scenario: Scenario) -> List[str]:
    """Stages needed by the scenario's checks and extra stages, in DAG order."""
    wanted: Set[str] = set(scenario.stages)
    wanted |= {CHECK_STAGES[c.kind] for c in scenario.checks}
    stack = list(wanted)
    while stack:
        for dep in STAGE_DEPENDENCIES[stack.pop()]:
            if dep not in wanted:
                wanted.add(dep)
                stack.append(dep)
    return [s for s in STAGE_DEPENDENCIES if s in wanted]


@dataclass
class _RunContext:
    scenario: Scenario
    seed: int
    p: float
    kappa: float
    grids: List[int]
    store: BaseArtifactStore
    summaries: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    objects: Dict[str, Any] = field(default_factory=dict)
    artifacts: List[str] = field(default_factory=list)
    timing: Dict[str, float] = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def save(self, stage: str, name: str, content: Any) -> None:
        key = self.store.put(self.scenario.name, stage, name, content)
        with self.lock:
            self.artifacts.append(key)


class ScenarioRunner:
    """Runs scenarios: solve → harness → bounds, plus the oblique reduction."""

    def __init__(
        self,
        settings: Optional[Settings] = None,
        store: Optional[BaseArtifactStore] = None,
        grid_override: Optional[int] = None,
        debug: bool = False,
        enable_tracing: bool = True,
    ):
        """Initialize the runner.

        Args:
            settings: Run settings (defaults to ``load_settings()``)
            store: Artifact store (defaults to an in-memory store)
            grid_override: Replace every scenario's grid list by this size
            debug: If True, enables debug logging
            enable_tracing: If True, records stage provenance
        """
        self.settings = settings or load_settings()
        self.store = store or InMemoryArtifactStore()
        self.grid_override = grid_override
        self.debug = debug
        self.tracer = Tracer(enabled=enable_tracing)
        self._setup_logging()

    def _setup_logging(self) -> None:
        """Configure logging from the debug flag or the configured level."""
        level = getattr(logging, self.settings.log_level, logging.INFO)
        if self.debug:
            level = logging.DEBUG
        logging.basicConfig(
            level=level,
            format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        )

    # Running ---------------------------------------------------------------

    def run(self, scenario: Scenario) -> Report:
        """Run every stage the scenario needs, evaluate its checks and persist the report."""
        seed = scenario.seed if scenario.seed is not None else self.settings.seed
        harness = scenario.harness
        ctx = _RunContext(
            scenario=scenario,
            seed=seed,
            p=harness.p if harness.p is not None else self.settings.p,
            kappa=harness.kappa if harness.kappa is not None else self.settings.kappa,
            grids=[self.grid_override] if self.grid_override else list(scenario.grids),
            store=self.store,
        )
        self.tracer.start_run(scenario.name)
        stages = required_stages(scenario)
        logger.info(f"Running scenario '{scenario.name}' with stages {stages}")

        error: Optional[StageError] = None
        try:
            self._execute(ctx, stages)
        except StageError as exc:
            error = exc
            logger.error(
                f"Scenario '{scenario.name}' failed: {exc}", exc_info=self.debug
            )

        checks: List[CheckResult] = []
        if error is None:
            checks = [self._evaluate(ctx, spec) for spec in scenario.checks]
        passed = error is None and all(c.passed for c in checks)
        report = Report(
            scenario=scenario.name,
            scenario_hash=scenario_hash(scenario),
            seed=seed,
            passed=passed,
            checks=checks,
            results=ctx.summaries,
            artifacts=sorted(ctx.artifacts),
            environment=environment_fingerprint(),
            timing=ctx.timing,
            error=str(error) if error else None,
        )
        self.tracer.end_run(error=error)
        if self.tracer.last_run is not None:
            report.trace = self.tracer.last_run.to_dict()
        self.store.put(
            scenario.name, "report", "report.json", report.model_dump(mode="json")
        )
        logger.info(report.summary())
        return report

    def _execute(self, ctx: _RunContext, stages: List[str]) -> None:
        """Run stages in dependency waves; independent stages share the pool."""
        done: Set[str] = set()
        pending = list(stages)
        with ThreadPoolExecutor(max_workers=self.settings.jobs) as pool:
            while pending:
                ready = [
                    s for s in pending if all(d in done for d in STAGE_DEPENDENCIES[s])
                ]
                futures: Dict[str, Future] = {
                    s: pool.submit(self._run_stage, ctx, s) for s in ready
                }
                for stage in ready:
                    futures[stage].result()
                    done.add(stage)
                    pending.remove(stage)

    def _run_stage(self, ctx: _RunContext, stage: str) -> None:
        handler: Callable[[_RunContext], Dict[str, Any]] = getattr(
            self, f"_stage_{stage}"
        )
        start = time.perf_counter()
        try:
            summary = handler(ctx)
        except StageError:
            raise
        except DiniKitError as exc:
            raise StageError(stage, f"{type(exc).__name__}: {exc}") from exc
        except Exception as exc:
            raise StageError(stage, f"unexpected {type(exc).__name__}: {exc}") from exc
        with ctx.lock:
            ctx.summaries[stage] = summary
            ctx.timing[stage] = time.perf_counter() - start
        self.tracer.log_stage(
            STAGE_KINDS[stage],
            inputs={"scenario": ctx.scenario.name, "stage": stage},
            constants={
                k: v for k, v in summary.items() if isinstance(v, (int, float, str))
            },
        )
        logger.debug(f"Stage '{stage}' finished in {ctx.timing[stage]:.2f}s")

    # Shared inputs -----------------------------------------------------------

    def _coefficients(self, ctx: _RunContext) -> Any:
        with ctx.lock:
            if "coeffs" not in ctx.objects:
                spec = ctx.scenario.coefficients
                ctx.objects["coeffs"] = generate_coefficients(spec.family, spec.params)
            return ctx.objects["coeffs"]

    def _data(self, ctx: _RunContext) -> DataSet:
        coeffs = self._coefficients(ctx)
        with ctx.lock:
            if "data" not in ctx.objects:
                spec = ctx.scenario.data
                make_data = get_family("data", spec.family)
                ctx.objects["data"] = make_data(coeffs, **spec.params)
            return ctx.objects["data"]

    def _shape(self, ctx: _RunContext) -> HalfBall:
        spec = ctx.scenario.solver
        cls = SmoothHalfBall if spec.shape == "smooth_half_ball" else HalfBall
        return cls((0.0, 0.0), spec.radius)

    # Stages ------------------------------------------------------------------

    def _stage_modulus(self, ctx: _RunContext) -> Dict[str, Any]:
        coeffs = self._coefficients(ctx)
        nominal = coefficient_modulus(coeffs)
        report = classify(nominal)
        n = ctx.grids[-1]
        shape = self._shape(ctx)
        grid = shape.grid(n)
        h = max(grid.h)
        radii = [4.0 * h, 8.0 * h, 16.0 * h]
        measured = np.zeros(len(radii))
        for i, j in ((0, 0), (0, 1), (1, 1)):
            entry = ScalarField.from_function(
                grid, lambda p, i=i, j=j: coeffs.matrix(p)[:, i, j]
            )
            omega = empirical_continuity_modulus(entry, radii)
            measured = np.maximum(measured, omega(np.asarray(radii)))
        expected = nominal(np.asarray(radii))
        ctx.save("modulus", "measured.csv", modulus_table_csv(radii, measured))
        ctx.save("modulus", "nominal.csv", modulus_table_csv(radii, expected))
        return {
            "classification": report.classification,
            "dini_integral": report.dini_integral_estimate,
            "radii": radii,
            "measured": measured.tolist(),
            "nominal": expected.tolist(),
        }

    def _stage_solve(self, ctx: _RunContext) -> Dict[str, Any]:
        coeffs = self._coefficients(ctx)
        data = self._data(ctx)
        shape = self._shape(ctx)
        rows: List[Dict[str, Any]] = []
        solutions: List[DiscreteSolution] = []
        for n in ctx.grids:
            if data.kind == "conormal":
                sol = solve_conormal(
                    coeffs, shape, resolution=n, g=data.g, g0=data.g0, f=data.f
                )
            else:
                sol = solve_mixed_nd(
                    coeffs, data.f, domain=shape, n=n, dirichlet=data.dirichlet
                )
            row: Dict[str, Any] = {"n": n, "residual": sol.residual}
            if data.exact is not None:
                row["max_error"] = sol.max_error(data.exact)
            if data.gradient is not None:
                interior = sol.grid.ball_mask((0.0, 0.0), 0.75 * shape.radius)
                pts = sol.grid.points()[interior.ravel()]
                diff = sol.gradient.values[interior] - data.gradient(pts)
                err = np.linalg.norm(diff, axis=1)
                row["gradient_error"] = float(np.nanmax(err))
            rows.append(row)
            solutions.append(sol)
            logger.info(f"Solved {data.kind} problem at n={n}: {row}")
        ctx.objects["solutions"] = solutions
        ctx.save("solve", f"solution_n{ctx.grids[-1]}.csv", solutions[-1].to_csv())
        return {"grids": rows, "kind": data.kind}

    def _stage_harness(self, ctx: _RunContext) -> Dict[str, Any]:
        spec = ctx.scenario.harness
        u = ctx.objects["solutions"][-1]
        omega_A = coefficient_modulus(self._coefficients(ctx))
        study = decay_study(
            u,
            spec.centers,
            spec.r0,
            kappa=ctx.kappa,
            count=spec.radii,
            p=ctx.p,
            mode=spec.mode,
            omega_A=omega_A,
            omega_data=self._data(ctx).omega_data,
            flat_y=self._shape(ctx).flat_y or 0.0,
        )
        ctx.objects["study"] = study
        for k, table in enumerate(study.tables):
            ctx.save("harness", f"excess_{k}.csv", table.to_csv())
        ctx.save(
            "harness", "decay.json", {**study.to_dict(), "plot": study.plot_data()}
        )
        return {
            "slopes": [t.slope for t in study.tables],
            "labels": [t.label for t in study.tables],
            "C0": study.C0(),
        }

    def _stage_bounds(self, ctx: _RunContext) -> Dict[str, Any]:
        spec = ctx.scenario.harness
        study: DecayStudy = ctx.objects["study"]
        boundary = study.boundary_tables()
        center = boundary[0].center if boundary else (0.0, 0.0)
        assembly = modulus_bound_compare(
            ctx.objects["solutions"][-1],
            coefficient_modulus(self._coefficients(ctx)),
            self._data(ctx).omega_data,
            mode=spec.mode,
            kappa=ctx.kappa,
            beta=spec.beta,
            C0=study.C0(),
            p=ctx.p,
            center=center,
            radius=self._shape(ctx).radius,
            pairs=spec.pairs,
            seed=ctx.seed,
        )
        ctx.objects["assembly"] = assembly
        ctx.save("bounds", "pairs.csv", assembly.to_csv())
        ctx.save("bounds", "assembly.json", assembly.to_dict())
        return assembly.to_dict()

    def _stage_reduce(self, ctx: _RunContext) -> Dict[str, Any]:
        spec = ctx.scenario.oblique
        assert spec is not None
        coeffs = self._coefficients(ctx)
        data = self._data(ctx)
        domain_spec = ctx.scenario.domain
        make_domain = get_family("domain", domain_spec.family)
        domain: GraphDomain = make_domain(**domain_spec.params)
        oblique = ObliqueField.constant(spec.beta, beta0=spec.beta0, mu0=spec.mu0)
        min_oblique = oblique.check(domain)
        if data.exact is None or data.f is None:
            raise StageError(
                "reduce", f"data family '{data.name}' has no manufactured solution"
            )
        problem = ObliqueProblem(
            coeffs=coeffs,
            oblique=oblique,
            f=data.f,
            g=data.oblique_data(oblique.beta, oblique.beta0),
            omega_f=data.omega_data,
            omega_A=coefficient_modulus(coeffs),
        )
        reduced = reduce_to_neumann(
            problem,
            domain,
            spec.x0,
            data.exact,
            r=spec.r,
            resolution=spec.resolution,
            tracer=self.tracer,
        )
        ctx.objects["reduced"] = reduced
        flat_trace = reduced.flat_trace_derivative()
        s0 = reduced.flattening.s0
        flat_pts = np.column_stack([np.linspace(-s0, s0, 9), np.full(9, 0.5 * s0)])
        phi = reduced.flattening.map
        ctx.save("reduce", "flattening.csv", phi.to_csv(phi.inverse(flat_pts)))
        ctx.save("reduce", "provenance.json", reduced.provenance)
        return {"flat_trace": flat_trace, "s0": s0, "min_obliqueness": min_oblique}

    def _stage_c2(self, ctx: _RunContext) -> Dict[str, Any]:
        reduced = ctx.objects["reduced"]
        radius = 4.0 * reduced.flattening.s0
        sampled = sample_half_ball(reduced.u_reduced, radius, n=C2_SAMPLES)
        report = c2_global_pipeline(
            sampled,
            radius,
            omega_A=coefficient_modulus(self._coefficients(ctx)),
            omega_f=reduced.omega_f0,
            theta=ZeroModulus(),
            kappa=ctx.kappa,
        )
        ctx.objects["c2"] = report
        ctx.save("c2", "c2.json", report.to_dict())
        return report.to_dict()

    # Checks ------------------------------------------------------------------

    def _evaluate(self, ctx: _RunContext, spec: CheckSpec) -> CheckResult:
        handler: Callable[[_RunContext, Dict[str, Any]], CheckResult] = getattr(
            self, f"_check_{spec.kind}"
        )
        result = handler(ctx, spec.params)
        result.name = spec.label
        return result

    def _check_classification(
        self, ctx: _RunContext, params: Dict[str, Any]
    ) -> CheckResult:
        got = ctx.summaries["modulus"]["classification"]
        expected = params.get("expected", "double_dini")
        return CheckResult(
            name="",
            kind="classification",
            passed=got == expected,
            detail={"got": got, "expected": expected},
        )

    def _check_coefficient_modulus(
        self, ctx: _RunContext, params: Dict[str, Any]
    ) -> CheckResult:
        tol = float(params.get("tol", 0.15))
        measured = np.asarray(ctx.summaries["modulus"]["measured"])
        nominal = np.asarray(ctx.summaries["modulus"]["nominal"])
        if np.all(nominal == 0):
            worst = float(np.max(measured))
            return CheckResult(
                name="",
                kind="coefficient_modulus",
                passed=worst <= 1e-12,
                value=worst,
                threshold=1e-12,
            )
        worst = float(np.max(np.abs(measured / nominal - 1.0)))
        return CheckResult(
            name="",
            kind="coefficient_modulus",
            passed=worst <= tol,
            value=worst,
            threshold=tol,
        )

    def _check_solution_error(
        self, ctx: _RunContext, params: Dict[str, Any]
    ) -> CheckResult:
        key = "gradient_error" if params.get("field") == "gradient" else "max_error"
        tol = float(params.get("tol", 1e-6))
        finest = ctx.summaries["solve"]["grids"][-1]
        if key not in finest:
            return CheckResult(
                name="",
                kind="solution_error",
                passed=False,
                detail={"reason": f"no {key} available"},
            )
        value = float(finest[key])
        return CheckResult(
            name="",
            kind="solution_error",
            passed=value <= tol,
            value=value,
            threshold=tol,
        )

    def _check_decay_band(
        self, ctx: _RunContext, params: Dict[str, Any]
    ) -> CheckResult:
        lo, hi = (float(v) for v in params["band"])
        slopes = [t.slope for t in ctx.objects["study"].boundary_tables()]
        ok = bool(slopes) and all(np.isfinite(s) and lo <= s <= hi for s in slopes)
        return CheckResult(
            name="",
            kind="decay_band",
            passed=ok,
            value=float(min(slopes)) if slopes else None,
            threshold=[lo, hi],
            detail={"slopes": slopes},
        )

    def _check_decay_floor(
        self, ctx: _RunContext, params: Dict[str, Any]
    ) -> CheckResult:
        floor = float(params.get("floor", 1e-6))
        tables = ctx.objects["study"].boundary_tables()
        last = [t.values[-1] for t in tables if t.values]
        value = float(max(last)) if last else np.inf
        return CheckResult(
            name="",
            kind="decay_floor",
            passed=value <= floor,
            value=value,
            threshold=floor,
        )

    def _check_one_step_stability(
        self, ctx: _RunContext, params: Dict[str, Any]
    ) -> CheckResult:
        factor = float(params.get("factor", 3.0))
        study: DecayStudy = ctx.objects["study"]
        c0 = [
            f.C0
            for f, t in zip(study.fits, study.tables)
            if t.label == "boundary" and f.C0 > 0
        ]
        spread = float(max(c0) / min(c0)) if c0 else 1.0
        worst = min((min(f.residuals, default=0.0) for f in study.fits), default=0.0)
        ok = spread < factor and worst >= -1e-9
        return CheckResult(
            name="",
            kind="one_step_stability",
            passed=ok,
            value=spread,
            threshold=factor,
            detail={"min_residual": worst},
        )

    def _check_bound_coverage(
        self, ctx: _RunContext, params: Dict[str, Any]
    ) -> CheckResult:
        assembly = ctx.objects["assembly"]
        if "C_max" in params:
            assembly.C_max = float(params["C_max"])
        return CheckResult(
            name="",
            kind="bound_coverage",
            passed=assembly.passed,
            value=assembly.C_fit,
            detail=assembly.to_dict(),
        )

    def _check_flat_trace(
        self, ctx: _RunContext, params: Dict[str, Any]
    ) -> CheckResult:
        tol = float(params.get("tol", 1e-5))
        value = float(ctx.summaries["reduce"]["flat_trace"])
        return CheckResult(
            name="",
            kind="flat_trace",
            passed=value <= tol,
            value=value,
            threshold=tol,
        )

    def _check_c2_bound(self, ctx: _RunContext, params: Dict[str, Any]) -> CheckResult:
        report = ctx.objects["c2"]
        return CheckResult(
            name="",
            kind="c2_bound",
            passed=report.passed,
            value=report.bound,
            detail=report.to_dict(),
        )

    # Introspection -----------------------------------------------------------

    def explain(self) -> Dict[str, Any]:
        """Return the provenance trace of the last run."""
        run = self.tracer.current_run or self.tracer.last_run
        if run is None:
            return {"status": "no_run"}
        return run.to_dict()


def run(scenario: Scenario, **kwargs: Any) -> Report:
    """Run one scenario with a fresh ScenarioRunner."""
    return ScenarioRunner(**kwargs).run(scenario)
