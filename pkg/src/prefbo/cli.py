"""`pbo` command line: benchmarks, plots, theorem suites, and the service."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from .acquisition import AcquisitionSpec
from .bench import BenchConfig, aggregate, run_benchmark, traces_from_csv, traces_to_csv
from .exact import (
    noise_gap_constant,
    random_state,
    run_theorem4_instance,
    verify_lemma_a1,
    verify_lemma_a2,
    verify_theorem1,
    verify_theorem2,
    SoftmaxLikelihood,
)
from .simulation import PROBLEM_NAMES


@click.group()
def main():
    """Preferential Bayesian optimization toolkit."""


@main.command()
@click.option("--problem", required=True, type=click.Choice(PROBLEM_NAMES))
@click.option("--algo", default="qeubo", type=click.Choice(["qeubo", "qei", "qts", "random"]))
@click.option("--q", default=2, show_default=True)
@click.option("--queries", default=150, show_default=True)
@click.option("--reps", default=10, show_default=True)
@click.option("--noise", default=0.2, type=click.Choice(["0.1", "0.2", "0.3"], case_sensitive=False), callback=lambda c, p, v: float(v), show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--mc-samples", default=128, show_default=True)
@click.option("--restarts", default=16, show_default=True)
@click.option("--refit-every", default=5, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def bench(problem, algo, q, queries, reps, noise, seed, mc_samples, restarts, refit_every, out):
    """Run replicated benchmark replications and write a regret CSV."""
    spec = AcquisitionSpec(kind=algo, q=q, mc_samples=mc_samples, restarts=restarts)
    cfg = BenchConfig(
        problem=problem,
        spec=spec,
        n_queries=queries,
        n_replications=reps,
        noise_target=noise,
        base_seed=seed,
        refit_every=refit_every,
    )
    traces = run_benchmark(cfg)
    failures = [t for t in traces if t.failure]
    Path(out).write_text(traces_to_csv(traces))
    summary = aggregate([t for t in traces if not t.failure])
    click.echo(f"wrote {out}")
    click.echo(
        f"final mean log10 regret: {summary.mean_log10_regret[-1]:.3f} "
        f"+/- {summary.half_width[-1]:.3f} | mean acq seconds: {summary.mean_acq_seconds:.3f}"
    )
    if failures:
        click.echo(f"WARNING: {len(failures)} replication(s) failed", err=True)
        sys.exit(1)


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def plot(in_path, out):
    """Render mean log-regret curves from a bench CSV to a static figure."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    traces = traces_from_csv(Path(in_path).read_text())
    groups: dict[tuple, list] = {}
    for t in traces:
        groups.setdefault((t.problem, t.algo, t.q, t.noise), []).append(t)

    fig, ax = plt.subplots(figsize=(6, 4))
    for (problem, algo, q, noise), ts in sorted(groups.items()):
        summary = aggregate(ts)
        x = np.arange(len(summary.mean_log10_regret))
        label = f"{algo} (q={q})"
        ax.plot(x, summary.mean_log10_regret, label=label)
        ax.fill_between(
            x,
            summary.mean_log10_regret - summary.half_width,
            summary.mean_log10_regret + summary.half_width,
            alpha=0.2,
        )
        ax.set_title(f"{problem}, noise {noise}")
    ax.set_xlabel("query index")
    ax.set_ylabel("log10 simple regret")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out)
    click.echo(f"wrote {out}")


@main.command()
@click.option("--suite", default="all", type=click.Choice(["theorem1", "theorem2", "theorem4", "lemmas", "all"]))
@click.option("--seed", default=0, show_default=True)
@click.option("--trials", default=100, show_default=True)
@click.option("--report", type=click.Path(dir_okay=False), default=None)
def verify(suite, seed, trials, report):
    """Exact finite-domain verification suites with per-trial witnesses."""
    rng = np.random.default_rng(seed)
    reports = []

    if suite in ("theorem1", "all"):
        for i in range(trials):
            q = 2 if i % 2 == 0 else 3
            state = random_state(rng, likelihood=SoftmaxLikelihood(0.0))
            reports.append(verify_theorem1(state, q=q))
    if suite in ("theorem2", "all"):
        lams = [0.05, 0.2, 1.0]
        for i in range(trials):
            state = random_state(rng, likelihood=SoftmaxLikelihood(0.0))
            reports.append(verify_theorem2(state, lam=lams[i % 3], q=2))
    if suite in ("lemmas", "all"):
        for i in range(trials):
            q = int(rng.integers(2, 7))
            s = rng.uniform(-3, 3, size=q)
            lam = float(np.exp(rng.uniform(np.log(1e-2), np.log(10.0))))
            reports.append(verify_lemma_a1(s, lam))
        for i in range(max(trials // 2, 1)):
            lam = float(np.exp(rng.uniform(np.log(0.05), np.log(1.0))))
            state = random_state(rng, likelihood=SoftmaxLikelihood(lam))
            reports.append(verify_lemma_a2(state))
    if suite in ("theorem4", "all"):
        result = run_theorem4_instance(0.2, 0.75, n_steps=100, policy="qei", runs=3, seed=seed)
        constant = all(abs(r - 0.2) == 0.0 for r in result.mean_regret)
        queries_ok = all(qr == (2, 3) for run in result.queries for qr in run)
        recs_ok = all(rec == 1 for run in result.recommendations for rec in run)
        from .exact import TheoremReport

        reports.append(
            TheoremReport(
                theorem="theorem4",
                instance="p=0.2, a=0.75, qei, 100 steps",
                passed=constant and queries_ok and recs_ok,
                witness={
                    "regret_head": result.mean_regret[:5],
                    "constant_regret": constant,
                    "queries_always_pair_of_last_two": queries_ok,
                    "recommendation_always_second": recs_ok,
                },
            )
        )

    by_theorem: dict[str, list] = {}
    for rep in reports:
        by_theorem.setdefault(rep.theorem, []).append(rep)
    failed = 0
    for name, reps in sorted(by_theorem.items()):
        ok = sum(r.passed for r in reps)
        status = "PASS" if ok == len(reps) else "FAIL"
        click.echo(f"{status} {name}: {ok}/{len(reps)} instances")
        failed += len(reps) - ok
    click.echo(f"noise-gap constant C(q=2) = {noise_gap_constant(2):.6f}")

    if report:
        payload = {"seed": seed, "trials": trials, "reports": [r.to_json() for r in reports]}
        Path(report).write_text(json.dumps(payload, indent=2))
        click.echo(f"wrote {report}")
    if failed:
        sys.exit(1)


@main.command()
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--data-dir", default="./pbo-sessions", show_default=True, type=click.Path(file_okay=False))
@click.option("--static", "static_dir", default=None, type=click.Path(file_okay=False, exists=True))
def serve(port, host, data_dir, static_dir):
    """Serve the session API (and optionally the browser UI bundle)."""
    import uvicorn

    from .service import SessionManager, create_app

    manager = SessionManager(data_dir)
    app = create_app(manager, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
