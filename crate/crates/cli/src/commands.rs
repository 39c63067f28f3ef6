use std::io::Write as _;

use shapley_core::exact::{self, COALITION_ENUMERATION_LIMIT};
use shapley_core::game::{FamilyGame, Game};
use shapley_core::harness::{self, CoverageMethod, CurveMethod};
use shapley_core::output::{Cell, Document};
use shapley_core::srs::{self, BoundMethod};
use shapley_core::stratified::{self, BoundsSource, SourcedBounds, StratifiedOptions};
use shapley_core::{LinearBounds, ShapleyError};

use crate::{
    BoundsArgs, CliError, Common, CompareArgs, CoverageArgs, CoverageKind, CurveArgs, CurveKind, Format, Preset,
    SrsArgs, SrsBound, StratifiedArgs,
};

type CliResult<T> = std::result::Result<T, CliError>;

const ESTIMATE_COLUMNS: [&str; 8] =
    ["player", "estimate", "exact_if_known", "abs_error_if_known", "epsilon_bound", "method", "m", "seed"];

// Ground truth for the estimate tables is only computed when it is cheap.
const CHEAP_EXACT_PLAYERS: usize = 16;

fn load_game(common: &Common) -> CliResult<FamilyGame> {
    let path = common.game.as_ref().ok_or_else(|| CliError::Config("--game FILE is required".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(harness::parse_game(&text)?)
}

fn optional_game(common: &Common) -> CliResult<Option<FamilyGame>> {
    match common.game {
        Some(_) => load_game(common).map(Some),
        None => Ok(None),
    }
}

/// Keeps a constant that cannot be computed from being fatal.
fn unless_infeasible<T>(r: shapley_core::Result<T>) -> CliResult<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(ShapleyError::Infeasible { .. } | ShapleyError::NoGroundTruth(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn known_exact(game: &FamilyGame) -> CliResult<Option<Vec<f64>>> {
    if let Some(phi) = game.facts().and_then(|f| f.exact_shapley.clone()) {
        return Ok(Some(phi));
    }
    if game.players() <= CHEAP_EXACT_PLAYERS {
        return Ok(Some(exact::shapley_exact(game)?));
    }
    Ok(None)
}

fn source_name(source: BoundsSource) -> &'static str {
    match source {
        BoundsSource::Exact => "exact",
        BoundsSource::ClosedForm => "closed_form",
        BoundsSource::Metadata => "metadata",
        BoundsSource::UserSupplied => "user_supplied",
    }
}

fn game_header(doc: Document, game: &FamilyGame) -> Document {
    doc.meta("family", game.family_name()).meta("n", game.players())
}

fn estimate_row(player: usize, estimate: f64, exact: Option<f64>, bound: Option<f64>, method: &str, m: u64, seed: u64) -> Vec<Cell> {
    vec![
        player.into(),
        estimate.into(),
        exact.into(),
        exact.map(|e| (estimate - e).abs()).into(),
        bound.into(),
        method.into(),
        m.into(),
        seed.into(),
    ]
}

pub fn emit(common: &Common, doc: &Document) -> CliResult<()> {
    let text = match common.format {
        Format::Csv => doc.to_csv(),
        Format::Json => doc.to_json(common.raw_bits),
    };
    match &common.out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::Io(format!("stdout: {e}")))
        }
    }
}

pub fn exact(common: &Common, permutations: bool) -> CliResult<Document> {
    let game = load_game(common)?;
    let values = if permutations {
        (0..game.players())
            .map(|i| exact::shapley_exact_permutations(&game, i))
            .collect::<shapley_core::Result<Vec<f64>>>()?
    } else {
        exact::shapley_exact(&game)?
    };
    let method = if permutations { "permutations" } else { "coalitions" };
    let mut doc = game_header(Document::new(["player", "value"]), &game)
        .meta("command", "exact")
        .meta("method", method)
        .meta("efficiency_gap", values.iter().sum::<f64>() - game.worth(shapley_core::Coalition::grand(game.players())));
    for (i, v) in values.into_iter().enumerate() {
        doc.push_row(vec![i.into(), v.into()]);
    }
    Ok(doc)
}

pub fn estimate_srs(args: &SrsArgs) -> CliResult<Document> {
    let game = load_game(&args.common)?;
    let method = match args.bound {
        Some(SrsBound::Hoeffding) => BoundMethod::Hoeffding,
        Some(SrsBound::Chebyshev) => BoundMethod::Chebyshev,
        None if args.sigma2.is_some() && args.range.is_none() => BoundMethod::Chebyshev,
        None => BoundMethod::Hoeffding,
    };
    let constant = match method {
        BoundMethod::Chebyshev => match args.sigma2 {
            Some(s) => Some(s),
            None => unless_infeasible(harness::resolve_variance_bound(&game))?,
        },
        _ => match args.range {
            Some(r) => Some(r),
            None => unless_infeasible(harness::resolve_range_bound(&game))?,
        },
    };
    let m = match (args.m, args.epsilon, constant) {
        (Some(m), _, _) => m,
        (None, Some(eps), Some(c)) => match method {
            BoundMethod::Chebyshev => srs::chebyshev_sample_size(c, eps, args.delta)?,
            _ => srs::hoeffding_sample_size(c, eps, args.delta)?,
        },
        (None, Some(_), None) => {
            return Err(CliError::Infeasible(
                "no bound constant: pass --range or --sigma2, or give --m directly".into(),
            ))
        }
        (None, None, _) => return Err(CliError::Config("pass --m or --epsilon".into())),
    };
    let bound = match constant {
        Some(c) => Some(match method {
            BoundMethod::Chebyshev => srs::chebyshev_error_bound(c, m, args.delta)?,
            _ => srs::hoeffding_error_bound(c, m, args.delta)?,
        }),
        None => None,
    };
    let estimate = srs::estimate_srs(&game, m, args.seed)?;
    let truth = known_exact(&game)?;
    let mut doc = game_header(Document::new(ESTIMATE_COLUMNS), &game)
        .meta("command", "estimate-srs")
        .meta("method", method.label())
        .meta("m", m)
        .meta("seed", args.seed)
        .meta("delta", args.delta)
        .meta("epsilon_target", args.epsilon)
        .meta(if method == BoundMethod::Chebyshev { "sigma2" } else { "range" }, constant)
        .meta("epsilon_bound", bound)
        .meta("oracle_calls", m * (game.players() as u64 + 1));
    for (i, &phi) in estimate.per_player.iter().enumerate() {
        let exact = truth.as_ref().map(|t| t[i]);
        doc.push_row(estimate_row(i, phi, exact, bound, method.label(), m, args.seed));
    }
    Ok(doc)
}

pub fn estimate_stratified(args: &StratifiedArgs) -> CliResult<Document> {
    let game = load_game(&args.common)?;
    let n = game.players();
    let bounds: SourcedBounds = match args.d {
        Some(d) => LinearBounds::from_d(d)?.into(),
        None => stratified::resolve_linear_bounds(&game)?,
    };
    let m = match (args.m, args.epsilon) {
        (Some(m), _) => m,
        (None, Some(eps)) => stratified::stratified_sample_size(bounds.bounds.d, n, args.beta, eps)?,
        (None, None) => return Err(CliError::Config("pass --m or --epsilon".into())),
    };
    let players: Vec<usize> = match args.player {
        Some(p) if p >= n => return Err(ShapleyError::InvalidCoalition { player: p, n }.into()),
        Some(p) => vec![p],
        None => (0..n).collect(),
    };
    let options = StratifiedOptions { exhaust_saturated: !args.no_exhaust };
    let truth = known_exact(&game)?;
    let mut rows = Vec::with_capacity(players.len());
    let mut oracle_calls = 0u64;
    let mut delta_per_stratum = None;
    for &i in &players {
        let est = stratified::estimate_stratified_with(&game, i, m, args.beta, bounds, args.seed, options)?;
        oracle_calls += est.oracle_calls();
        delta_per_stratum = Some(est.delta_per_stratum);
        let exact = truth.as_ref().map(|t| t[i]);
        rows.push(estimate_row(i, est.global_estimate, exact, Some(est.bound.epsilon), "stratified", m, args.seed));
    }
    let mut doc = game_header(Document::new(ESTIMATE_COLUMNS), &game)
        .meta("command", "estimate-stratified")
        .meta("method", "stratified")
        .meta("m", m)
        .meta("seed", args.seed)
        .meta("beta", args.beta)
        .meta("delta_per_stratum", delta_per_stratum)
        .meta("epsilon_target", args.epsilon)
        .meta("a", bounds.bounds.a)
        .meta("b", bounds.bounds.b)
        .meta("d", bounds.bounds.d)
        .meta("bounds_source", source_name(bounds.source))
        .meta("exhaust_saturated", options.exhaust_saturated)
        .meta("oracle_calls", oracle_calls);
    for row in rows {
        doc.push_row(row);
    }
    Ok(doc)
}

pub fn bounds(args: &BoundsArgs) -> CliResult<Document> {
    let game = optional_game(&args.common)?;
    let mut quantities: Vec<(&str, Cell)> = Vec::new();
    let mut n = args.n;
    let mut d = args.d;
    let mut range = args.range;
    let mut sigma2 = args.sigma2;
    if let Some(g) = &game {
        n = n.or(Some(g.players()));
        quantities.push(("n", g.players().into()));
        if d.is_none() {
            if let Some(b) = unless_infeasible(stratified::resolve_linear_bounds(g))? {
                quantities.push(("a", b.bounds.a.into()));
                quantities.push(("b", b.bounds.b.into()));
                quantities.push(("bounds_source", source_name(b.source).into()));
                d = Some(b.bounds.d);
            }
        }
        if range.is_none() && g.players() <= COALITION_ENUMERATION_LIMIT {
            range = unless_infeasible(harness::resolve_range_bound(g))?;
        }
        if sigma2.is_none() && g.players() <= COALITION_ENUMERATION_LIMIT {
            sigma2 = unless_infeasible(harness::resolve_variance_bound(g))?;
        }
    }
    let constants = [("d", d), ("range", range), ("sigma2", sigma2)];
    quantities.extend(constants.iter().filter_map(|&(k, v)| v.map(|v| (k, v.into()))));
    if let Some(eps) = args.epsilon {
        quantities.push(("epsilon", eps.into()));
        quantities.push(("delta", args.delta.into()));
        if let Some(s) = sigma2 {
            quantities.push(("chebyshev_m", srs::chebyshev_sample_size(s, eps, args.delta)?.into()));
        }
        if let Some(r) = range {
            quantities.push(("hoeffding_m", srs::hoeffding_sample_size(r, eps, args.delta)?.into()));
        }
        if let (Some(d), Some(n)) = (d, n) {
            quantities.push(("beta", args.beta.into()));
            quantities.push(("stratified_m", stratified::stratified_sample_size(d, n, args.beta, eps)?.into()));
        }
    }
    if let Some(m) = args.m {
        quantities.push(("m", m.into()));
        if let Some(s) = sigma2 {
            quantities.push(("chebyshev_bound", srs::chebyshev_error_bound(s, m, args.delta)?.into()));
        }
        if let Some(r) = range {
            quantities.push(("hoeffding_bound", srs::hoeffding_error_bound(r, m, args.delta)?.into()));
        }
        if let (Some(d), Some(n)) = (d, n) {
            if args.epsilon.is_none() {
                quantities.push(("beta", args.beta.into()));
            }
            quantities.push(("delta_per_stratum", stratified::per_stratum_delta(args.beta, n)?.into()));
            quantities.push(("stratified_bound", stratified::stratified_error_bound(d, m, n, args.beta)?.into()));
            quantities.push(("srs_floor", stratified::srs_error_floor(d, n, args.beta)?.into()));
            quantities.push(("stratified_beats_srs", stratified::stratified_beats_srs(m, n).into()));
        }
    }
    if args.epsilon.is_none() && args.m.is_none() && game.is_none() {
        return Err(CliError::Config("pass --game, --epsilon or --m".into()));
    }
    let mut doc = Document::new(["quantity", "value"]).meta("command", "bounds");
    for (key, value) in quantities {
        doc = doc.meta(key, value.clone());
        doc.push_row(vec![key.into(), value]);
    }
    Ok(doc)
}

pub fn compare(args: &CompareArgs) -> CliResult<Document> {
    let game = optional_game(&args.common)?;
    let n = match (args.n, &game) {
        (Some(n), _) => n,
        (None, Some(g)) => g.players(),
        (None, None) => return Err(CliError::Config("pass --n or --game".into())),
    };
    // The comparison itself does not depend on d; it only scales both sides.
    let d = match (args.d, &game) {
        (Some(d), _) => d,
        (None, Some(g)) => stratified::resolve_linear_bounds(g)?.bounds.d,
        (None, None) => 1.0,
    };
    // Every stratum needs at least one sample for the bound to mean anything.
    stratified::allocate_samples(args.m, n)?;
    let threshold = ((n + 1) * (n + 1) / 4 + 1) as u64;
    let mut doc = Document::new([
        "n",
        "m",
        "beta",
        "d",
        "stratified_bound",
        "srs_floor",
        "threshold_m",
        "stratified_beats_srs",
    ])
    .meta("command", "compare");
    doc.push_row(vec![
        n.into(),
        args.m.into(),
        args.beta.into(),
        d.into(),
        stratified::stratified_error_bound(d, args.m, n, args.beta)?.into(),
        stratified::srs_error_floor(d, n, args.beta)?.into(),
        threshold.into(),
        stratified::stratified_beats_srs(args.m, n).into(),
    ]);
    Ok(doc)
}

pub fn coverage(args: &CoverageArgs) -> CliResult<Document> {
    if let Some(Preset::CltDemo) = args.preset {
        let cmp = harness::clt_demo(args.trials, args.seed)?;
        let mut doc = Document::new(["trial", "error", "clt_halfwidth", "clt_miss", "hoeffding_bound", "hoeffding_miss"])
            .meta("command", "coverage")
            .meta("preset", "clt-demo")
            .meta("n", harness::CLT_DEMO_PLAYERS)
            .meta("player", cmp.clt.player)
            .meta("exact", cmp.clt.exact)
            .meta("m", cmp.clt.samples_per_trial)
            .meta("delta", cmp.clt.guaranteed_delta)
            .meta("trials", cmp.clt.trials)
            .meta("seed", args.seed)
            .meta("clt_method", cmp.clt.method.label())
            .meta("clt_misses", cmp.clt.misses)
            .meta("clt_miss_rate", cmp.clt.empirical_miss_rate)
            .meta("hoeffding_epsilon", cmp.hoeffding.epsilon)
            .meta("hoeffding_misses", cmp.hoeffding.misses)
            .meta("hoeffding_miss_rate", cmp.hoeffding.empirical_miss_rate);
        for t in 0..cmp.clt.per_trial_errors.len() {
            let err = cmp.clt.per_trial_errors[t];
            let (clt, hoeff) = (cmp.clt.per_trial_bounds[t], cmp.hoeffding.per_trial_bounds[t]);
            doc.push_row(vec![t.into(), err.into(), clt.into(), (err > clt).into(), hoeff.into(), (err > hoeff).into()]);
        }
        return Ok(doc);
    }
    let game = load_game(&args.common)?;
    let (method, confidence) = match args.method {
        CoverageKind::Chebyshev => (CoverageMethod::Chebyshev, args.delta),
        CoverageKind::Hoeffding => (CoverageMethod::Hoeffding, args.delta),
        CoverageKind::Stratified => (
            CoverageMethod::Stratified { exhaust_saturated: !args.no_exhaust },
            args.beta.unwrap_or(args.delta),
        ),
        CoverageKind::Clt => (CoverageMethod::CltBaseline { m: args.m }, args.delta),
    };
    let report =
        harness::coverage_experiment(&game, args.player, method, args.epsilon, confidence, args.trials, args.seed)?;
    let mut doc = game_header(Document::new(["trial", "seed", "error", "bound", "miss"]), &game)
        .meta("command", "coverage")
        .meta("method", report.method.label())
        .meta("has_guarantee", report.method.has_guarantee())
        .meta("player", report.player)
        .meta("exact", report.exact)
        .meta("samples_per_trial", report.samples_per_trial)
        .meta("trials", report.trials)
        .meta("seed", args.seed)
        .meta("epsilon", report.epsilon)
        .meta("guaranteed_delta", report.guaranteed_delta)
        .meta("misses", report.misses)
        .meta("empirical_miss_rate", report.empirical_miss_rate)
        .meta("slack", report.slack())
        .meta("within_guarantee", report.within_guarantee());
    for (t, (&err, &bound)) in report.per_trial_errors.iter().zip(&report.per_trial_bounds).enumerate() {
        let seed = harness::trial_seed(args.seed, t as u64);
        doc.push_row(vec![t.into(), seed.into(), err.into(), bound.into(), (err > bound).into()]);
    }
    Ok(doc)
}

pub fn curve(args: &CurveArgs) -> CliResult<Document> {
    let game = load_game(&args.common)?;
    let (method, label) = match args.method {
        CurveKind::Hoeffding => (CurveMethod::Hoeffding, "hoeffding"),
        CurveKind::Chebyshev => (CurveMethod::Chebyshev, "chebyshev"),
        CurveKind::Stratified => (CurveMethod::Stratified, "stratified"),
    };
    let rows =
        harness::error_curve(&game, args.player, method, &args.m_grid, args.seeds_per_point, args.delta, args.seed)?;
    let mut doc = game_header(Document::new(["m", "mean_abs_error", "bound"]), &game)
        .meta("command", "curve")
        .meta("method", label)
        .meta("player", args.player)
        .meta("seeds_per_point", args.seeds_per_point)
        .meta("delta", args.delta)
        .meta("seed", args.seed);
    for row in rows {
        doc.push_row(vec![row.m.into(), row.mean_abs_error.into(), row.bound.into()]);
    }
    Ok(doc)
}
