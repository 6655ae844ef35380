"""Command-line front end.

Every subcommand reads a flat config (``--config``; ``TAILBOND_<KEY>``
environment variables override file values; ``--seed`` overrides both),
collects its artifacts in memory and writes them, plus an entry in
``manifest.json``, to ``--out-dir`` at the end. Inputs default to the files
earlier subcommands leave in ``--out-dir``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np
import pandas as pd

from . import _svg, atsm, curve, ingest, portfolio, predict, synthlab, tailrisk, threepass
from .exceptions import NumericalError, ValidationError

logger = logging.getLogger("tailbond")

COMMANDS = ("tail-estimate", "returns", "predict-is", "predict-oos", "portfolio", "atsm", "three-pass", "synth",
            "report")
SPECS = ("univ", "pc3", "pc5")
# NBER US business-cycle contractions, peak month to trough month
RECESSIONS = (("2001-03", "2001-11"), ("2007-12", "2009-06"), ("2020-02", "2020-04"))
TABLE_FLOAT = "%.10g"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Context:
    def __init__(self, cfg: ingest.RunConfig, out_dir: Path, threads: int):
        self.cfg = cfg
        self.out = out_dir
        self.threads = threads
        self.inputs = {}
        self._pending = []

    def path(self, given, default_name, required=True):
        p = Path(given) if given else self.out / default_name
        if not p.exists():
            if required:
                raise ValidationError(f"input not found: {p}" + ("" if given else f" (run the command that writes "
                                                                                   f"{default_name} first)"))
            return None
        self.inputs[p.name] = sha256_file(p)
        return p

    def emit(self, name, writer):
        self._pending.append((name, writer))

    def emit_csv(self, name, frame: pd.DataFrame, index=True, float_format=TABLE_FLOAT):
        self.emit(name, lambda p: frame.to_csv(p, index=index, float_format=float_format, lineterminator="\n"))

    def flush(self, command):
        self.out.mkdir(parents=True, exist_ok=True)
        names = []
        for name, writer in self._pending:
            writer(self.out / name)
            names.append(name)
        manifest_path = self.out / "manifest.json"
        manifest = {}
        if manifest_path.exists():
            try:
                manifest = json.loads(manifest_path.read_text())
            except json.JSONDecodeError:
                manifest = {}
        manifest.setdefault("commands", {})[command] = {
            "config_sha256": hashlib.sha256(self.cfg.to_text().encode()).hexdigest(),
            "seed": self.cfg.seed,
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": sorted(names),
        }
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return names


# -- shared loaders ----------------------------------------------------------------


def _yields(ctx, given):
    p = ctx.path(given, "yields.csv")
    panel = ingest.load_yields(p)
    start = pd.Timestamp(ctx.cfg.sample_start).to_period("M")
    end = pd.Timestamp(ctx.cfg.sample_end).to_period("M")
    months = panel.dates.to_period("M")
    keep = (months >= start) & (months <= end)
    if keep.sum() < 24:
        raise ValidationError(f"fewer than 24 yield months inside {start}..{end}")
    return curve.YieldPanel(panel.frame.loc[keep])


def _tail(ctx, given, required=True):
    p = ctx.path(given, "tail_series.csv", required)
    if p is None:
        return None
    frame = pd.read_csv(p, parse_dates=["date"]).set_index("date")
    if "tr" not in frame.columns:
        raise ValidationError(f"{p.name}: missing tr column")
    return frame["tr"]


def _monthly(series: pd.Series, dates) -> pd.Series:
    s = pd.Series(series, dtype=float)
    s.index = pd.DatetimeIndex(s.index).to_period("M")
    out = s.reindex(pd.DatetimeIndex(dates).to_period("M"))
    out.index = pd.DatetimeIndex(dates)
    return out


def _predictors(yields: curve.YieldPanel, tr: pd.Series) -> pd.DataFrame:
    tr_m = _monthly(tr, yields.dates)
    missing = tr_m.index[tr_m.isna()]
    if len(missing):
        logger.warning("tail series missing in %d month(s); those months are dropped", len(missing))
    ok = tr_m.notna()
    pcs = curve.pca(yields.select(predict.default_pc_maturities(yields.maturities)), 5).scores
    frame = pd.concat([tr_m.rename("TR"), pcs], axis=1).loc[ok]
    return curve.standardize(frame)


def _returns(ctx, yields):
    return curve.excess_returns(yields, ctx.cfg.maturities_months)


# -- commands ----------------------------------------------------------------------


def cmd_synth(args, ctx):
    cfg = ctx.cfg
    world = synthlab.gen_world(cfg.sample_start, cfg.sample_end, seed=cfg.seed, noise_sd=args.noise_sd,
                               days_per_month=args.days_per_month)
    ctx.emit("options.csv", lambda p: ingest.write_option_chain(p, world["options"]))
    ctx.emit("rates.csv", lambda p: ingest.write_series(p, world["rates"]))
    ctx.emit("atm_iv.csv", lambda p: ingest.write_series(p, world["atm_iv"]))
    y = world["yields"]
    grid = y.copy()
    grid.columns = [f"m{c}" for c in grid.columns]
    grid.insert(0, "date", grid.index.strftime("%Y-%m-%d"))
    ctx.emit_csv("yields.csv", grid, index=False, float_format="%.17g")
    truth = world["truth"].copy()
    truth["k_threshold"] = [tailrisk.tail_threshold(v) for v in truth["atm_iv30"]]
    truth["tr"] = tailrisk.left_jump_volatility(truth["alpha"].to_numpy(), truth["phi"].to_numpy(),
                                                truth["k_threshold"].to_numpy())
    truth.index = truth.index.strftime("%Y-%m-%d")
    ctx.emit_csv("truth.csv", truth, float_format="%.17g")
    print(f"synthetic world: {len(world['options'])} option quotes, {len(y)} months")


def cmd_tail_estimate(args, ctx):
    groups = ingest.load_option_chain(ctx.path(args.options, "options.csv"))
    rates_p = ctx.path(args.rates, "rates.csv", required=bool(args.rates))
    if rates_p is None:
        warnings.warn("no rates series; using a zero risk-free rate", stacklevel=1)
        rate_for = lambda d, tenor: 0.0  # noqa: E731
    else:
        rates = ingest.load_series(rates_p).to_series()
        table = {ts.date(): v for ts, v in rates.items()}
        rate_for = lambda d, tenor: table[d]  # noqa: E731
    iv_p = ctx.path(args.atm_iv, "atm_iv.csv", required=bool(args.atm_iv))
    if iv_p is None:
        iv_table = synthlab.atm_iv30(groups, rate_for)
    else:
        iv_table = {ts.date(): v for ts, v in ingest.load_series(iv_p).to_series().items()}
    atm_iv_for = lambda d: iv_table[d]  # noqa: E731

    chains, dropped = ingest.prepare_chains(groups, rate_for, atm_iv_for)
    daily, skipped = tailrisk.estimate_daily_params(chains, atm_iv_for)
    if not daily:
        raise NumericalError("no date produced tail parameters")
    months = pd.period_range(ctx.cfg.sample_start, ctx.cfg.sample_end, freq="M")
    series = tailrisk.build_tail_series(daily, ctx.cfg.tail_sampling, months)
    ctx.emit("tail_series.csv", series.to_csv)
    daily_frame = pd.DataFrame(
        [(p.as_of.isoformat(), p.alpha, p.phi, p.k_threshold, p.tr, p.n_options_alpha, p.n_options_phi)
         for p in daily],
        columns=["date", "alpha", "phi", "k_threshold", "tr", "n_options_alpha", "n_options_phi"],
    )
    ctx.emit_csv("tail_daily.csv", daily_frame, index=False, float_format="%.17g")
    drops = pd.DataFrame([(d.isoformat(), e.isoformat(), r) for d, e, r in dropped] +
                         [(d.isoformat(), "", r) for d, r in skipped], columns=["date", "expiry", "reason"])
    ctx.emit_csv("tail_dropped.csv", drops, index=False)
    shade = [(_year_frac(a), _year_frac(b)) for a, b in RECESSIONS]
    ctx.emit("fig1_tr.svg", lambda p: _svg.line_chart(p, series.frame[["tr"]].rename(columns={"tr": "TR"}),
                                                       "Left jump tail volatility", shade))
    print(f"tail series: {len(series.frame)} months, {len(series.gaps)} gap month(s), {len(dropped)} chain(s) dropped")

    truth_p = ctx.path(args.truth, "truth.csv", required=bool(args.truth))
    if truth_p is not None:
        truth = pd.read_csv(truth_p, parse_dates=["date"]).set_index("date")
        est = series.frame
        common = est.index.intersection(truth.index)
        if len(common):
            ea = np.abs(est.loc[common, "alpha"] - truth.loc[common, "alpha"]).max()
            ep = np.abs(est.loc[common, "phi"] - truth.loc[common, "phi"]).max()
            et = np.abs(est.loc[common, "tr"] - truth.loc[common, "tr"]).max()
            print(f"recovery over {len(common)} months: max |alpha error| = {ea:.3e}, "
                  f"max |phi error| = {ep:.3e}, max |TR error| = {et:.3e}")


def _year_frac(month):
    p = pd.Period(month, freq="M")
    return p.year + (p.month - 1) / 12.0


def cmd_returns(args, ctx):
    yields = _yields(ctx, args.yields)
    rx = _returns(ctx, yields)
    frame = rx.frame.copy()
    frame.columns = [f"rx{n}" for n in rx.maturities]
    tr = _tail(ctx, args.tail, required=False)
    stats_frame = frame.copy()
    corr_frame = frame.copy()
    if tr is not None:
        # TR at t sits next to returns over (t, t+1]
        tr_t = _monthly(tr, yields.dates).shift(1).reindex(frame.index)
        stats_frame["TR"] = _monthly(tr, frame.index)
        corr_frame["TR"] = tr_t.to_numpy()
    stats = curve.descriptive_stats(stats_frame)
    if "TR" in stats.columns:
        # TR is a level, not a return: report raw moments
        x = stats_frame["TR"].dropna()
        stats.loc["mean", "TR"] = x.mean()
        stats.loc["sd", "TR"] = x.std(ddof=1)
        stats.loc["sr", "TR"] = np.nan
    corr = corr_frame.corr()
    corr.index = [f"corr_{c}" for c in corr.index]
    table = pd.concat([stats, corr])
    table.index.name = "row"
    out = rx.frame.copy()
    out.index = out.index.strftime("%Y-%m-%d")
    out.index.name = "date"
    ctx.emit_csv("returns.csv", out, float_format="%.17g")
    ctx.emit_csv("table1.csv", table)
    pcs = curve.pca(yields.select(predict.default_pc_maturities(yields.maturities)), 5).scores
    pcs.index = pcs.index.strftime("%Y-%m-%d")
    pcs.index.name = "date"
    ctx.emit_csv("pcs.csv", pcs)


def cmd_predict_is(args, ctx):
    cfg = ctx.cfg
    yields = _yields(ctx, args.yields)
    tr = _tail(ctx, args.tail)
    rx = _returns(ctx, yields)
    preds = _predictors(yields, tr)
    blocks = []
    for spec in SPECS:
        res = predict.predictive_regression(rx, preds, spec, cfg.nw_lags)
        boot = predict.bh_bootstrap(rx, yields, preds["TR"], spec, "coef_t", B=cfg.bootstrap_reps, seed=cfg.seed,
                                    nw_lags=cfg.nw_lags, threads=ctx.threads)
        tab = res.table(boot.pvalues)
        tab.index = pd.MultiIndex.from_product([[spec], tab.index], names=["panel", "stat"])
        blocks.append(tab)
    ctx.emit_csv("table2.csv", pd.concat(blocks))


def _oos(ctx, rx, preds, yields, spec, window):
    return predict.oos_forecast(rx, preds, spec, window, ctx.cfg.oos_split, yields=yields)


def cmd_predict_oos(args, ctx):
    cfg = ctx.cfg
    yields = _yields(ctx, args.yields)
    tr = _tail(ctx, args.tail)
    rx = _returns(ctx, yields)
    preds = _predictors(yields, tr)
    blocks, dcs = [], {}
    for spec in SPECS:
        for window in ("expanding", "rolling"):
            fc = _oos(ctx, rx, preds, yields, spec, window)
            boot = predict.bh_bootstrap(rx, yields, preds["TR"], spec, ("cw", "r2_os"), B=cfg.bootstrap_reps,
                                        seed=cfg.seed, nw_lags=cfg.nw_lags, oos_split=cfg.oos_split, window=window,
                                        pcs="recursive", threads=ctx.threads)
            evals = predict.evaluate_oos(fc, cfg.nw_lags, boot["cw"], boot["r2_os"])
            tab = predict.oos_table(evals)
            tab.index = pd.MultiIndex.from_product([[spec], [window], tab.index], names=["panel", "window", "stat"])
            blocks.append(tab)
            for n, ev in evals.items():
                dcs[(spec, window, n)] = ev.dcspe
            long = pd.concat({n: f for n, f in fc.frames.items()}, names=["maturity", "date"]).reset_index()
            long["date"] = pd.DatetimeIndex(long["date"]).strftime("%Y-%m-%d")
            ctx.emit_csv(f"oos_forecasts_{spec}_{window}.csv", long, index=False, float_format="%.17g")
    ctx.emit_csv("table3.csv", pd.concat(blocks))
    dc = pd.DataFrame({f"{s}_{w}_{n}": v for (s, w, n), v in dcs.items()})
    dc.index = pd.DatetimeIndex(dc.index).strftime("%Y-%m-%d")
    dc.index.name = "date"
    ctx.emit_csv("dcspe.csv", dc)
    sel = dc[[c for c in dc.columns if c.startswith(f"univ_{cfg.window}_")]]
    sel.index = pd.DatetimeIndex(sel.index)
    ctx.emit("fig_dcspe.svg", lambda p: _svg.line_chart(p, sel, "Cumulative squared error difference"))


def cmd_portfolio(args, ctx):
    cfg = ctx.cfg
    yields = _yields(ctx, args.yields)
    tr = _tail(ctx, args.tail)
    rx = _returns(ctx, yields)
    preds = _predictors(yields, tr)
    y1m = yields.frame[1]
    rows, dcru = [], {}
    for spec in SPECS:
        fc = _oos(ctx, rx, preds, yields, spec, cfg.window)
        for n, frame in fc.frames.items():
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                model, bench = portfolio.economic_value(frame, rx.frame[n], y1m, cfg.gamma, cfg.weight_bounds)
            rows.append({"benchmark": spec, "gamma": cfg.gamma, "maturity": n, "delta": model.delta,
                         "theta": model.theta, "cer_model": model.cer, "cer_bench": bench.cer,
                         "binding_share": float(model.binding.mean())})
            dcru[f"{spec}_{n}"] = pd.Series(
                portfolio.dcru(model.portfolio_returns.to_numpy(), bench.portfolio_returns.to_numpy(), cfg.gamma),
                index=frame.index)
    ctx.emit_csv("table_econ.csv", pd.DataFrame(rows), index=False)
    d = pd.DataFrame(dcru)
    d.index = d.index.strftime("%Y-%m-%d")
    d.index.name = "date"
    ctx.emit_csv("dcru.csv", d)


def cmd_atsm(args, ctx):
    cfg = ctx.cfg
    yields = _yields(ctx, args.yields)
    tr = _tail(ctx, args.tail)
    X, means, scales = atsm.build_state(tr, yields)
    rx = curve.excess_returns(yields, atsm.RETURN_MATURITIES)
    mats = list(atsm.STATE_MATURITIES)
    est = atsm.AffineTermStructureModel(zero_mean=True, yield_maturities=tuple(mats), wald_reps=args.wald_reps,
                                        seed=cfg.seed)
    est.fit(X, rx, y1m=yields.frame[1], yields=yields.select(mats))
    fit = est.fit_
    fit.return_errors = pd.DataFrame(est.step2_.residuals, index=X.index[1:], columns=rx.maturities)
    m = est.model_
    names = list(X.columns)

    params = []
    for name, arr in (("mu", m.mu), ("Phi", m.Phi), ("Sigma", m.Sigma), ("lambda0", m.lambda0),
                      ("lambda1", m.lambda1), ("delta1", m.delta1), ("beta", m.beta)):
        arr = np.atleast_2d(arr) if np.ndim(arr) == 2 else np.asarray(arr)[:, None]
        for i in range(arr.shape[0]):
            for j in range(arr.shape[1]):
                params.append((name, names[i], j, arr[i, j]))
    params += [("delta0", "", 0, m.delta0), ("sigma2", "", 0, m.sigma2)]
    params += [("state_mean", names[i], 0, means[i]) for i in range(len(names))]
    params += [("state_scale", names[i], 0, scales[i]) for i in range(len(names))]
    ctx.emit_csv("atsm_params.csv", pd.DataFrame(params, columns=["param", "row", "col", "value"]), index=False,
                 float_format="%.17g")

    def dated(frame):
        f = frame.copy()
        f.index = pd.DatetimeIndex(f.index).strftime("%Y-%m-%d")
        f.index.name = "date"
        return f

    ctx.emit_csv("fitted_yields.csv", dated(fit.fitted_yields))
    ctx.emit_csv("rn_yields.csv", dated(fit.rn_yields))
    ctx.emit_csv("term_premia.csv", dated(fit.term_premia))
    for factor in names:
        y_c, rn_c, tp_c = atsm.factor_contribution(fit, factor)
        both = pd.concat({"yield": y_c, "rn": rn_c, "tp": tp_c}, names=["component", "date"]).reset_index()
        both["date"] = pd.DatetimeIndex(both["date"]).strftime("%Y-%m-%d")
        ctx.emit_csv(f"contributions_{factor}.csv", both, index=False)

    t5 = pd.concat({"yield_bp": atsm.pricing_error_summary(fit.yield_errors),
                    "return_bp": atsm.pricing_error_summary(fit.return_errors)}, names=["errors", "stat"])
    ctx.emit_csv("table5.csv", t5)
    wald = est.wald_tests(threads=ctx.threads)
    ctx.emit_csv("table6.csv", wald[["W_beta", "p_beta"]].rename_axis("factor"))
    ctx.emit_csv("table7.csv", wald[["W_Lambda", "p_Lambda", "W_lambda1", "p_lambda1"]].rename_axis("factor"))

    show = [n for n in (24, 60, 120) if n in mats]
    obs = yields.frame.loc[X.index, show]
    panel = pd.concat({"fitted": fit.fitted_yields[show], "observed": obs, "rn": fit.rn_yields[show]}, axis=1)
    panel.columns = [f"{a}_{b}" for a, b in panel.columns]
    ctx.emit("fig2_yields.svg", lambda p: _svg.line_chart(p, panel[[f"fitted_{show[-1]}", f"observed_{show[-1]}",
                                                                     f"rn_{show[-1]}"]] * 100,
                                                          "Fitted, observed and risk-neutral yields (%)"))
    tp = fit.term_premia[show] * 100
    tp.columns = [f"tp_{c}" for c in tp.columns]
    ctx.emit("fig5_tp.svg", lambda p: _svg.line_chart(p, tp, "Term premia (%)"))
    nidx = np.array(mats)
    load = pd.DataFrame(-12.0 * m.b[nidx - 1] / nidx[:, None], index=mats, columns=names).iloc[3::4]
    load_rn = pd.DataFrame(-12.0 * m.b_rn[nidx - 1] / nidx[:, None], index=mats, columns=names).iloc[3::4]
    ctx.emit("fig3_loadings.svg", lambda p: _svg.bar_chart(p, load, "Yield loadings"))
    ctx.emit("fig4_rn_loadings.svg", lambda p: _svg.bar_chart(p, load_rn, "Risk-neutral yield loadings"))
    y_c, rn_c, tp_c = atsm.factor_contribution(fit, names[0])
    when = [X[names[0]].idxmax(), X[names[0]].idxmin(), X.index[-1]]
    slices = pd.DataFrame({f"{kind}_{d:%Y-%m}": c.loc[d] * 1e4 for d in when
                           for kind, c in (("tp", tp_c), ("rn", rn_c))})
    ctx.emit("fig6_slice.svg", lambda p: _svg.line_chart(p, slices, f"{names[0]} contribution by maturity (bp)"))


def cmd_three_pass(args, ctx):
    cfg = ctx.cfg
    yields = _yields(ctx, args.yields)
    tr = _tail(ctx, args.tail)
    rx = curve.excess_returns(yields, atsm.RETURN_MATURITIES).frame
    g = _monthly(tr, rx.index)
    ok = g.notna().to_numpy()
    R = rx.to_numpy(dtype=float)[ok].T
    G = g.to_numpy()[ok][None, :]
    ps = [p for p in range(1, args.max_p + 1) if p < R.shape[0]]
    table = threepass.p_sweep(R, G, ps, B=cfg.bootstrap_reps, seed=cfg.seed, lags=cfg.nw_lags, threads=ctx.threads)
    table.columns = [f"p{p}" for p in table.columns]
    table.index.name = "stat"
    ctx.emit_csv("table8.csv", table)


REPORT_ARTIFACTS = ("tail_series.csv", "table1.csv", "table2.csv", "table3.csv", "table_econ.csv", "table5.csv",
                    "table6.csv", "table7.csv", "table8.csv")


def cmd_report(args, ctx):
    present = [n for n in REPORT_ARTIFACTS if (ctx.out / n).exists()]
    if not present:
        raise ValidationError(f"no artifacts to report in {ctx.out}; run the estimation commands first")
    lines = ["tailbond report", ""]
    for name in present:
        p = ctx.out / name
        ctx.inputs[name] = sha256_file(p)
        frame = pd.read_csv(p)
        lines.append(f"== {name} ({len(frame)} rows)")
        lines.append(frame.head(40).to_string(index=False, float_format=lambda v: f"{v:.4g}"))
        lines.append("")
    text = "\n".join(lines) + "\n"
    ctx.emit("report.txt", lambda p: Path(p).write_text(text))
    print(text)


HANDLERS = {
    "synth": cmd_synth,
    "tail-estimate": cmd_tail_estimate,
    "returns": cmd_returns,
    "predict-is": cmd_predict_is,
    "predict-oos": cmd_predict_oos,
    "portfolio": cmd_portfolio,
    "atsm": cmd_atsm,
    "three-pass": cmd_three_pass,
    "report": cmd_report,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out-dir", default=".", help="artifact directory (default: current)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for bootstrap loops")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="tailbond",
        description="Equity tail risk and government bond pricing toolkit.",
        epilog=f"Config keys may be overridden with {ingest.ENV_PREFIX}<KEY> environment variables.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("synth", parents=[common], help="write a synthetic options/yields world")
    p.add_argument("--noise-sd", type=float, default=0.0)
    p.add_argument("--days-per-month", type=int, default=5)
    p = sub.add_parser("tail-estimate", parents=[common], help="monthly tail risk series from option quotes")
    p.add_argument("--options")
    p.add_argument("--rates", help="date,value risk-free rates (cc decimal); zero if absent")
    p.add_argument("--atm-iv", help="date,value 30-day ATM implied vol; inverted from quotes if absent")
    p.add_argument("--truth", help="synthetic truth file for a recovery report")
    for name in ("returns", "predict-is", "predict-oos", "portfolio", "atsm", "three-pass"):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("--yields", help="yields CSV (grid or NSS form)")
        p.add_argument("--tail", help="tail_series.csv")
        if name == "atsm":
            p.add_argument("--wald-reps", type=int, default=999)
        if name == "three-pass":
            p.add_argument("--max-p", type=int, default=8)
    sub.add_parser("report", parents=[common], help="summarize artifacts in --out-dir")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        overrides = {"seed": args.seed} if args.seed is not None else None
        cfg = ingest.load_config(args.config, overrides)
        if args.threads < 1:
            raise ValidationError("--threads must be >= 1")
        ctx = Context(cfg, Path(args.out_dir), args.threads)
        if args.config:
            ctx.inputs[Path(args.config).name] = sha256_file(args.config)
        with np.errstate(all="ignore"):
            HANDLERS[args.command](args, ctx)
        ctx.flush(args.command)
    except ValidationError as exc:
        print(f"tailbond {args.command}: invalid input: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"tailbond {args.command}: numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"tailbond {args.command}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
