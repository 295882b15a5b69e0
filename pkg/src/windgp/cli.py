"""
Command line interface.

    windgp fit         --data D.csv [--config C.yaml] --out DIR
    windgp predict     --fit DIR [--out DIR2] [--targets T.csv]
    windgp compare     --fit DIR1 DIR2 ... --out DIR
    windgp simulate    --data D.csv --config C.yaml --out DIR
    windgp wind-interp --data D.csv [--targets T.csv] --out DIR

``fit`` writes ``samples.csv``, ``data.csv`` and ``manifest.json``; the
other commands read a fit directory back through those files.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from windgp import __version__
from windgp.errors import WindGPError
from windgp.inference import ObservationModel, run_chain
from windgp.io import (
    build_chain,
    build_priors,
    build_spec,
    load_config,
    load_dataset,
    make_grid,
    manifest_line,
    merge_config,
    read_samples,
    write_dataset,
    write_json,
    write_samples,
    write_table,
)
from windgp.models import MODELS, LatentFields, ParameterState
from windgp.prediction import PredictionRequest, interp_wind, predict
from windgp.selection import TABLE_COLUMNS, CriterionReport, evaluate
from windgp.simulation import SimulationRequest, correlation_map, ellipse_field, simulate_field

logger = logging.getLogger("windgp")

__all__ = ["main", "build_parser"]


def _common(p, data=True, out=True):
    p.add_argument("--config", help="YAML run configuration")
    if data:
        p.add_argument("--data", help="station table (site_id,x,y,value[,u,v])")
    if out:
        p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="random seed (overrides the config)")
    p.add_argument("--model", choices=MODELS, help="model (overrides the config)")


def build_parser():
    ap = argparse.ArgumentParser(prog="windgp", description=__doc__.splitlines()[1])
    ap.add_argument("--version", action="version", version=f"windgp {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="run the MCMC sampler")
    _common(p)
    p.add_argument("--iterations", type=int)
    p.add_argument("--burnin", type=int)
    p.add_argument("--thin", type=int)

    p = sub.add_parser("predict", help="predictive surface from a fit")
    _common(p, data=False)
    p.add_argument("--fit", required=True, help="output directory of a fit run")
    p.add_argument("--targets", help="table of target sites (default: prediction grid)")

    p = sub.add_parser("compare", help="comparison criteria for fitted models")
    _common(p, data=False)
    p.add_argument("--fit", nargs="+", required=True, help="fit output directories")

    p = sub.add_parser("simulate", help="simulate fields at fixed parameters")
    _common(p)
    p.add_argument("--realizations", type=int)

    p = sub.add_parser("wind-interp", help="interpolate wind directions")
    _common(p)
    p.add_argument("--targets", help="table of target sites (default: prediction grid)")
    return ap


def _config(args):
    cfg = load_config(args.config)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.model is not None:
        over["model"] = args.model
    chain = {k: getattr(args, k, None) for k in ("iterations", "burnin", "thin")}
    chain = {k: v for k, v in chain.items() if v is not None}
    if chain:
        over["chain"] = chain
    return merge_config(cfg, over)


def _need(value, flag):
    if value is None:
        raise WindGPError(f"missing required option {flag}")
    return value


def _out_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _prediction_targets(cfg, data, targets_path):
    if targets_path:
        t = load_dataset(targets_path)
        return t.site_ids, t.coords, t.winds
    pc = cfg["prediction"]
    bbox = pc.get("bbox")
    if bbox is None:
        lo, hi = data.coords.min(axis=0), data.coords.max(axis=0)
        bbox = (lo[0], hi[0], lo[1], hi[1])
    pts = make_grid(bbox, pc["nx"], pc["ny"])
    return [f"g{i}" for i in range(len(pts))], pts, None


# --------------------------------------------------------------------------
# commands


def cmd_fit(args):
    cfg = _config(args)
    out = _out_dir(_need(args.out, "--out"))
    ds = load_dataset(_need(args.data, "--data"))
    model = ds.observation_model(exclude=cfg["heldout"])
    spec = build_spec(cfg, model)
    priors = build_priors(cfg, spec, model.coords)
    chain = build_chain(cfg, spec.model)
    logger.info("fitting %s to %d sites, %d iterations", spec.model, model.n, chain.iterations)
    samples = run_chain(model, spec, priors, chain)
    seed = chain.seed
    write_samples(os.path.join(out, "samples.csv"), samples, seed)
    write_dataset(os.path.join(out, "data.csv"), ds, manifest_line(spec.model, seed))
    write_json(os.path.join(out, "manifest.json"), {
        "version": __version__,
        "model": spec.model,
        "seed": seed,
        "config": cfg,
        "chain": {"iterations": chain.iterations, "burnin": chain.burnin, "thin": chain.thin},
        "acceptance": samples.acceptance,
        "burnin_acceptance": samples.burnin_acceptance,
        "fit_sites": model.site_ids,
        "heldout": list(cfg["heldout"]),
    })
    return 0


def _load_fit(fit_dir):
    with open(os.path.join(fit_dir, "manifest.json")) as fh:
        man = json.load(fh)
    cfg = merge_config(load_config(None), man["config"])
    ds = load_dataset(os.path.join(fit_dir, "data.csv"))
    model = ds.observation_model(exclude=cfg["heldout"])
    spec = build_spec(cfg, model)
    samples = read_samples(os.path.join(fit_dir, "samples.csv"), spec)
    if spec.model == "M5":
        samples.site_ids = list(model.site_ids)
    return man, cfg, ds, model, spec, samples


def _target_winds(spec, model, coords, winds):
    if not spec.needs_wind:
        return None, False
    if winds is not None and not np.any(np.isnan(winds)):
        return winds, False
    return interp_wind(model.coords, model.winds, coords), True


def cmd_predict(args):
    man, cfg, ds, model, spec, samples = _load_fit(args.fit)
    if args.config:
        cfg["prediction"] = load_config(args.config)["prediction"]
    seed = man["seed"] if args.seed is None else args.seed
    out = _out_dir(args.out or args.fit)
    ids, coords, winds = _prediction_targets(cfg, model, args.targets)
    tw, interpolated = _target_winds(spec, model, coords, winds)
    pc = cfg["prediction"]
    req = PredictionRequest(coords, samples, model, tw, draws_per_sample=pc["draws_per_sample"],
                            include_nugget=pc["include_nugget"], level=pc["level"], seed=seed)
    res = predict(req, spec)
    rows = [[sid, coords[i, 0], coords[i, 1], res.mean[i], res.sd[i], res.lower[i],
             res.upper[i]] for i, sid in enumerate(ids)]
    man_line = manifest_line(spec.model, seed, include_nugget=pc["include_nugget"],
                             winds_interpolated=interpolated)
    write_table(os.path.join(out, "predictions.csv"),
                ["site_id", "x", "y", "mean", "sd", "lower", "upper"], rows, man_line)
    return 0


def cmd_compare(args):
    out = _out_dir(_need(args.out, "--out"))
    report = CriterionReport()
    seeds = []
    for d in args.fit:
        man, cfg, ds, model, spec, samples = _load_fit(d)
        held = ds.heldout_model(cfg["heldout"]) if cfg["heldout"] else None
        if held is not None and spec.needs_wind and held.winds is None:
            held.winds = interp_wind(model.coords, model.winds, held.coords)
        report.add(evaluate(samples, model, spec, k=float(cfg["k"]), heldout=held,
                            seed=man["seed"]))
        seeds.append(str(man["seed"]))
    rows = [[r[c] for c in TABLE_COLUMNS] for r in report.as_dicts()]
    models = "+".join(r.model for r in report.rows)
    write_table(os.path.join(out, "criteria.csv"), list(TABLE_COLUMNS), rows,
                manifest_line(models, ",".join(seeds)))
    return 0


def _fixed_state(spec, params, n):
    if not params:
        raise WindGPError("simulate needs simulate.params in the config")
    beta = params.get("beta", [0.0])
    tau2 = float(params["tau2"])
    if "eta" in params:
        eta = float(params["eta"])
    else:
        eta = tau2 / float(params["sigma2"])
    delta = {k: float(params[k]) for k in spec.delta_names}
    latent = None
    if spec.model == "M5":
        lat = params.get("latent", {})
        vals = {k: np.broadcast_to(np.asarray(lat.get(k, 0.0), dtype=float), (n,))
                for k in ("loglam1", "loglam2", "gamma")}
        hyper = {k: float(lat[k]) for k in lat if k not in vals}
        latent = LatentFields(vals["loglam1"], vals["loglam2"], vals["gamma"], **hyper)
    return ParameterState(beta, tau2, eta, delta, latent)


def cmd_simulate(args):
    cfg = _config(args)
    if args.realizations is not None:
        cfg["simulate"]["realizations"] = args.realizations
    out = _out_dir(_need(args.out, "--out"))
    ds = load_dataset(_need(args.data, "--data"))
    obs = ObservationModel(ds.coords, np.zeros(ds.n), winds=ds.winds, site_ids=ds.site_ids)
    spec = build_spec(cfg, obs)
    sc = cfg["simulate"]
    state = _fixed_state(spec, sc["params"], ds.n)
    seed = int(cfg["seed"])
    winds = obs.winds
    real = simulate_field(SimulationRequest(spec, state, ds.coords, winds, seed=seed,
                                            n_realizations=int(sc["realizations"])))
    man = manifest_line(spec.model, seed)
    cols = ["site_id", "x", "y"] + [f"r{j}" for j in range(real.shape[1])]
    write_table(os.path.join(out, "realizations.csv"), cols,
                [[sid, ds.coords[i, 0], ds.coords[i, 1], *real[i]]
                 for i, sid in enumerate(ds.site_ids)], man)
    ref = sc.get("reference")
    r = 0 if ref is None else ds.site_ids.index(str(ref))
    corr = correlation_map(spec, state, ds.coords[r], ds.coords, winds,
                           None if winds is None else winds[r:r + 1], sites=ds.coords)
    write_table(os.path.join(out, "correlation_map.csv"), ["site_id", "x", "y", "correlation"],
                [[sid, ds.coords[i, 0], ds.coords[i, 1], corr[i]]
                 for i, sid in enumerate(ds.site_ids)],
                manifest_line(spec.model, seed, reference=ds.site_ids[r]))
    if spec.model in ("M3", "M5"):
        e = ellipse_field(spec, state, ds.coords, winds, scale=float(sc["ellipse_scale"]))
        write_table(os.path.join(out, "ellipses.csv"),
                    ["site_id", "x", "y", "major", "minor", "orientation"],
                    [[sid, e["x"][i], e["y"][i], e["major"][i], e["minor"][i],
                      e["orientation"][i]] for i, sid in enumerate(ds.site_ids)], man)
    return 0


def cmd_wind_interp(args):
    cfg = _config(args)
    out = _out_dir(_need(args.out, "--out"))
    ds = load_dataset(_need(args.data, "--data"))
    if ds.winds is None:
        raise WindGPError("the dataset has no u, v columns")
    known = ~np.isnan(ds.winds[:, 0])
    if args.targets:
        ids, coords, _ = _prediction_targets(cfg, ds, args.targets)
    elif not known.all():
        idx = np.flatnonzero(~known)
        ids, coords = [ds.site_ids[i] for i in idx], ds.coords[idx]
    else:
        ids, coords, _ = _prediction_targets(cfg, ds, None)
    w = interp_wind(ds.coords[known], ds.winds[known], coords)
    write_table(os.path.join(out, "winds.csv"), ["site_id", "x", "y", "u", "v"],
                [[sid, coords[i, 0], coords[i, 1], w[i, 0], w[i, 1]]
                 for i, sid in enumerate(ids)],
                manifest_line("none", cfg["seed"]))
    return 0


COMMANDS = {"fit": cmd_fit, "predict": cmd_predict, "compare": cmd_compare,
            "simulate": cmd_simulate, "wind-interp": cmd_wind_interp}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (WindGPError, OSError, KeyError, ValueError) as err:
        print(f"windgp {args.command}: error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
