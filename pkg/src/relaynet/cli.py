"""Headless command-line entry points for every pipeline stage.

Exit codes: 0 success, 1 invalid input, 2 declared infeasibility. All
artifacts are deterministic for a fixed flag set and seed (sorted JSON
keys, no timestamps), so experiment sweeps can be diffed byte for byte.
The RELAYNET_OUT environment variable overrides --out.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from . import designer, fixtures, macsim, routing, topology
from .fieldsim import GroundTruthChannel, channel_for_scenario, preset
from .graphs import DeploymentScenario, GraphError
from .linkmodel import (
    LinkModel,
    LinkModelError,
    MeasurementTrace,
    estimate_from_campaign,
)
from .qosmap import InfeasibleQos, QoSSpec, QosError, hop_bound

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_INFEASIBLE = 2


class CliError(Exception):
    pass


def _out_dir(args) -> Path:
    out = os.environ.get("RELAYNET_OUT") or args.out
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_scenario(spec: str) -> DeploymentScenario:
    if spec.startswith("builtin:"):
        return fixtures.builtin(spec.removeprefix("builtin:"))
    if not Path(spec).exists():
        raise CliError(f"scenario file not found: {spec}")
    return DeploymentScenario.load(spec)


def _apply_qos_flags(scenario: DeploymentScenario, args) -> DeploymentScenario:
    qos = scenario.qos
    if any(v is not None for v in (args.dmax_ms, args.pdel, args.k)):
        base = qos or QoSSpec(d_max_ms=200.0, p_del=0.73)
        qos = QoSSpec(
            d_max_ms=args.dmax_ms if args.dmax_ms is not None else base.d_max_ms,
            p_del=args.pdel if args.pdel is not None else base.p_del,
            k=args.k if args.k is not None else base.k,
            in_time_target=base.in_time_target,
        )
    lm = scenario.link_model
    if lm is not None and any(v is not None for v in (args.qmax, args.pout, args.pbad)):
        lm = LinkModel(
            r_max_m=lm.r_max_m,
            rssi_min_dbm=lm.rssi_min_dbm,
            q_max=args.qmax if args.qmax is not None else lm.q_max,
            p_out_target=args.pout if args.pout is not None else lm.p_out_target,
            p_bad_target=args.pbad if args.pbad is not None else lm.p_bad_target,
        )
    scenario.qos = qos
    scenario.link_model = lm
    return scenario


def _estimate_model_if_needed(scenario: DeploymentScenario, args) -> DeploymentScenario:
    if scenario.link_model is not None:
        return scenario
    if not args.preset:
        raise CliError("scenario has no link model; pass --preset to estimate one")
    positions = fixtures.calibration_positions(args.preset)
    channel = GroundTruthChannel(preset(args.preset, seed=args.seed), positions)
    trace = channel.hello_campaign(set(positions), args.packets)
    model, _ = estimate_from_campaign(
        trace,
        positions,
        p_out_target=args.pout if args.pout is not None else 0.04,
        p_bad_target=args.pbad if args.pbad is not None else 0.2,
        q_max=args.qmax if args.qmax is not None else 0.05,
    )
    scenario.link_model = model
    return scenario


def cmd_linkmodel(args) -> int:
    out = _out_dir(args)
    if args.trace:
        if not args.scenario:
            raise CliError("--trace needs --scenario for node positions")
        scenario = _load_scenario(args.scenario)
        positions = {n.id: (n.x_m, n.y_m) for n in scenario.nodes}
        trace = MeasurementTrace.read_csv(args.trace, args.meta)
        if not trace.n_sent:
            raise CliError("trace metadata with per-pair n_sent is required (--meta)")
    elif args.preset:
        positions = fixtures.calibration_positions(args.preset)
        channel = GroundTruthChannel(preset(args.preset, seed=args.seed), positions)
        trace = channel.hello_campaign(set(positions), args.packets)
    else:
        raise CliError("pass either --trace or --preset")
    model, curve = estimate_from_campaign(
        trace,
        positions,
        p_out_target=args.pout,
        p_bad_target=args.pbad,
        rssi_min_dbm=args.rssi_min,
        q_max=args.qmax if args.qmax is not None else 0.05,
        bin_width_m=args.bin_width,
    )
    _write_json(out / "link_model.json", model.to_dict())
    _write_json(out / "pbad_curve.json", curve.to_report())
    print(f"r_max_m = {model.r_max_m}")
    return EXIT_OK


def cmd_design(args) -> int:
    out = _out_dir(args)
    scenario = _apply_qos_flags(_load_scenario(args.scenario), args)
    scenario = _estimate_model_if_needed(scenario, args)
    session = designer.new_session(scenario)
    designer.initial_design(session)
    hb = hop_bound(
        session.link_model.q_max,
        session.qos.d_max_ms,
        session.link_model.p_out_target,
        session.qos.p_del,
        session.qos.in_time_target,
        session.mac,
    )
    _write_json(out / "hop_bound.json", hb.to_dict())
    _write_json(out / "graph.json", session.graph.to_dict())
    if session.current_design is None:
        print("infeasible: no QoS design exists on the model graph")
        return EXIT_INFEASIBLE
    _write_json(out / "design.json", session.current_design.to_dict())
    print(
        f"h_max = {hb.h_max}; relays = {sorted(session.current_design.relays_used)}"
    )
    return EXIT_OK


def cmd_iterate(args) -> int:
    out = _out_dir(args)
    scenario = _apply_qos_flags(_load_scenario(args.scenario), args)
    scenario = _estimate_model_if_needed(scenario, args)
    params = preset(args.preset or "indoor", seed=args.seed)
    channel = channel_for_scenario(scenario, params)
    field = designer.SimulatedField(channel, n_packets=args.packets)
    session = designer.new_session(scenario, learn_packets=args.packets)
    design = designer.iterate_until_feasible(session, field)
    _write_json(out / "session.json", session.to_dict())
    _write_json(
        out / "iteration_log.json", [r.to_dict() for r in session.iteration_log]
    )
    if design is None:
        print("infeasible: declared after exhausting augmentation options")
        return EXIT_INFEASIBLE
    _write_json(out / "design.json", design.to_dict())
    print(
        f"converged: relays = {sorted(design.relays_used)} "
        f"({len(session.iteration_log)} log records)"
    )
    return EXIT_OK


def cmd_robustness(args) -> int:
    out = _out_dir(args)
    scenario = _apply_qos_flags(_load_scenario(args.scenario), args)
    if scenario.name == "lab24":
        source_sets = fixtures.lab24_source_sets()
    else:
        source_sets = [sorted(n.id for n in scenario.sources)]
    k = args.k if args.k is not None else scenario.qos.k
    reports = []
    for seed in range(args.seeds):
        rep = designer.robustness_experiment(
            scenario,
            source_sets,
            k=k,
            n_cycles=args.cycles,
            trigger_pdel=args.trigger_pdel,
            seed=args.seed + seed,
            learn_packets=args.packets,
        )
        reports.append(rep)
    agg = {
        "k": k,
        "seeds": args.seeds,
        "total_redesigns": sum(r.total_redesigns for r in reports),
        "sets_without_augmentation": sum(r.sets_without_augmentation for r in reports),
        "per_seed": [r.to_dict() for r in reports],
    }
    _write_json(out / f"robustness_k{k}.json", agg)
    table = reports[0].to_text()
    (out / f"robustness_k{k}.txt").write_text(table + "\n")
    print(table)
    return EXIT_OK


def _write_windows_csv(path: Path, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["window_index", "source_id", "p_del_hat", "protocol"])
        for row in rows:
            w.writerow([row[0], row[1], repr(row[2]), row[3]])


def cmd_rpl_compare(args) -> int:
    out = _out_dir(args)
    k = args.k if args.k is not None else 2
    if k == 2:
        scenario = fixtures.rpl9()
        result, session, _ = routing.deploy_and_compare(
            scenario,
            fixtures.RPL_CHANNEL,
            seed=args.seed,
            n_packets_per_source=args.packets,
            drift_every_s=3600.0,
        )
    else:
        scenario = fixtures.rpl_sparse()

        def pre(channel):
            channel.force_shadow("s", "c1", -40.0)

        def sever(ch_static, ch_rpl):
            for ch in (ch_static, ch_rpl):
                ch.force_shadow("s", "a", -40.0)
                ch.force_shadow("s", "c1", 0.0)

        result, session, _ = routing.deploy_and_compare(
            scenario,
            fixtures.SHARP_CHANNEL,
            seed=args.seed,
            n_packets_per_source=args.packets,
            pre_interventions=pre,
            run_interventions=[(args.packets // 4, sever)],
        )
    _write_windows_csv(out / f"rpl_compare_k{k}.csv", result.to_rows())
    _write_json(
        out / f"rpl_compare_k{k}.json",
        {
            "k": k,
            "seed": args.seed,
            "rpl_mean": result.rpl.mean(),
            "static_mean": result.static.mean(),
            "design": session.current_design.to_dict(),
        },
    )
    print(f"rpl mean {result.rpl.mean():.4f} vs static mean {result.static.mean():.4f}")
    return EXIT_OK


def cmd_macsim(args) -> int:
    out = _out_dir(args)
    scenario = _apply_qos_flags(_load_scenario(args.scenario), args)
    session = designer.new_session(scenario)
    designer.initial_design(session)
    if session.current_design is None:
        print("infeasible: no design to simulate")
        return EXIT_INFEASIBLE
    design = session.current_design
    params = fixtures.CLEAN_CHANNEL.with_seed(args.seed)

    def factory():
        return channel_for_scenario(scenario, params)

    if args.lambda_max:
        rate = macsim.estimate_lambda_max(
            design,
            factory,
            session.qos,
            mac=session.mac,
            seed=args.seed,
            q_link=session.link_model.q_max,
            rssi_min_dbm=session.link_model.rssi_min_dbm,
            cs_range_m=1.5 * session.link_model.r_max_m,
        )
        _write_json(out / "lambda_max.json", {"lambda_max_pkt_s": rate})
        print(f"lambda_max = {rate:.4f} pkt/s")
        return EXIT_OK
    log = macsim.run_mac_sim(
        design,
        factory(),
        session.qos,
        arrival_rate_per_source=args.rate,
        duration_s=args.duration,
        mac=session.mac,
        seed=args.seed,
        q_link=session.link_model.q_max,
        rssi_min_dbm=session.link_model.rssi_min_dbm,
        cs_range_m=1.5 * session.link_model.r_max_m,
    )
    _write_json(out / "delivery_log.json", log.to_dict())
    rows = [(w, s, p, "macsim") for w, s, p in log.to_rows()]
    _write_windows_csv(out / "delivery_windows.csv", rows)
    print(f"mean in-time delivery = {log.mean_pdel():.4f}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(sessions_dir=args.sessions_dir, token=args.token)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def cmd_plots(args) -> int:
    out = _out_dir(args)
    blob = json.loads(Path(args.artifact).read_text())
    if args.kind == "pbad_curve":
        if not isinstance(blob, list) or any("bin_m" not in b for b in blob):
            raise CliError("artifact does not look like a p_bad curve report")
        path = out / "pbad_curve.csv"
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["bin_m", "n_links", "p_bad", "low_confidence"])
            for b in blob:
                w.writerow([b["bin_m"], b["n_links"], repr(b["p_bad"]), b["low_confidence"]])
        xs = [b["bin_m"] for b in blob]
        ys = [b["p_bad"] for b in blob]
        labels = ("link length (m)", "p_bad")
    elif args.kind == "delivery_windows":
        per_source = blob.get("per_source")
        if per_source is None:
            raise CliError("artifact does not look like a delivery log")
        path = out / "delivery_windows.csv"
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["window_index", "source_id", "p_del_hat"])
            for s in sorted(per_source):
                for win in per_source[s]:
                    w.writerow([win["window_index"], s, repr(win["p_del_hat"])])
        xs = ys = None
        labels = ("window", "p_del")
    else:
        raise CliError(f"unknown plot kind {args.kind!r}")
    if args.png:
        try:
            import matplotlib

            matplotlib.use("Agg")
            import matplotlib.pyplot as plt
        except ImportError as exc:
            raise CliError("matplotlib is not installed; omit --png") from exc
        fig, ax = plt.subplots()
        if args.kind == "pbad_curve":
            ax.plot(xs, ys, marker="o")
        else:
            for s in sorted(blob["per_source"]):
                wins = blob["per_source"][s]
                ax.plot(
                    [w["window_index"] for w in wins],
                    [w["p_del_hat"] for w in wins],
                    label=s,
                )
            ax.legend()
        ax.set_xlabel(labels[0])
        ax.set_ylabel(labels[1])
        fig.savefig(out / f"{args.kind}.png", dpi=120)
    print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="relaynet", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario=True):
        sp.add_argument("--out", default="relaynet_out", help="artifact directory")
        sp.add_argument("--seed", type=int, default=0)
        if scenario:
            sp.add_argument("--scenario", help="scenario JSON path or builtin:<name>")
        sp.add_argument("--preset", choices=sorted(fixtures.PRESET_NAMES), default=None)
        sp.add_argument("--k", type=int, default=None)
        sp.add_argument("--dmax-ms", dest="dmax_ms", type=float, default=None)
        sp.add_argument("--pdel", type=float, default=None)
        sp.add_argument("--qmax", type=float, default=None)
        sp.add_argument("--pout", type=float, default=None)
        sp.add_argument("--pbad", type=float, default=None)
        sp.add_argument("--packets", type=int, default=1000, help="hello packets per pair")

    sp = sub.add_parser("linkmodel", help="estimate r_max from a trace or simulated campaign")
    common(sp)
    sp.add_argument("--trace", help="hello-packet trace CSV")
    sp.add_argument("--meta", help="campaign metadata JSON (n_sent per pair)")
    sp.add_argument("--rssi-min", dest="rssi_min", type=float, default=-88.0)
    sp.add_argument("--bin-width", dest="bin_width", type=float, default=1.0)
    sp.set_defaults(fn=cmd_linkmodel, pout=0.04, pbad=0.2)

    sp = sub.add_parser("design", help="one-shot design on the model graph")
    common(sp)
    sp.set_defaults(fn=cmd_design)

    sp = sub.add_parser("iterate", help="full field-interactive loop on a simulated field")
    common(sp)
    sp.set_defaults(fn=cmd_iterate)

    sp = sub.add_parser("robustness", help="long-horizon repair/robustness experiment")
    common(sp)
    sp.add_argument("--cycles", type=int, default=40)
    sp.add_argument("--seeds", type=int, default=1)
    sp.add_argument("--trigger-pdel", dest="trigger_pdel", type=float, default=0.73)
    sp.set_defaults(fn=cmd_robustness, packets=300)

    sp = sub.add_parser("rpl-compare", help="static routes vs dynamic routing on one field")
    common(sp, scenario=False)
    sp.set_defaults(fn=cmd_rpl_compare, packets=8000)

    sp = sub.add_parser("macsim", help="packet-level CSMA/CA simulation of a design")
    common(sp)
    sp.add_argument("--rate", type=float, default=0.5, help="per-source Poisson rate (pkt/s)")
    sp.add_argument("--duration", type=float, default=2000.0, help="seconds of arrivals")
    sp.add_argument("--lambda-max", dest="lambda_max", action="store_true")
    sp.set_defaults(fn=cmd_macsim)

    sp = sub.add_parser("serve", help="run the design-console HTTP service")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8787)
    sp.add_argument("--sessions-dir", dest="sessions_dir", default=None)
    sp.add_argument("--token", default=None)
    sp.set_defaults(fn=cmd_serve)

    sp = sub.add_parser("plots", help="emit plot data (CSV always, PNG optional)")
    sp.add_argument("--artifact", required=True)
    sp.add_argument("--kind", required=True, choices=["pbad_curve", "delivery_windows"])
    sp.add_argument("--png", action="store_true")
    sp.add_argument("--out", default="relaynet_out")
    sp.set_defaults(fn=cmd_plots)

    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (CliError, GraphError, LinkModelError, QosError, FileNotFoundError) as exc:
        if isinstance(exc, InfeasibleQos):
            print(f"infeasible: {exc}", file=sys.stderr)
            return EXIT_INFEASIBLE
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except macsim.MacSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
