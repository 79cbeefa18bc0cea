//! One PASS/FAIL line per acceptance criterion. Runs without the libtest
//! harness so the report is always printed; exits non-zero if any line fails.
//! Set `MAXPERIM_FULL=1` to include the n = 32 code count (about a minute).

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;

use maxperim::codes::{code_to_composition, count_codes, enumerate_codes, odd_divisor_code, Code, QuarterCode};
use maxperim::geometry::{default_unit_tolerance, diameter_graph, is_small, upper_bound, zonogon_check};
use maxperim::mp::{self, Complex, DEFAULT_PRECISION_BITS as PREC, DEFAULT_TOL_BITS as TOL};
use maxperim::phase1::{
    build_ssp, merge_results, parallel_split, residual, solve_ssp, Arithmetic, Suffix,
};
use maxperim::phase2::{
    constraint_gram, constraints, init_regular, kkt_gradient, kkt_matrix, lagrangian, AngleVector,
    KktState,
};
use maxperim::pipeline::{
    closed_form_check, enumerate_and_solve, published_quarter_code, solve_best_codes, solve_code,
    solve_two_phase, verify_polynomial_root, EnumerateOptions, IntegerPolynomial, SolveOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::Float;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn digits(x: &Float, reference: &str) -> usize {
    mp::matching_fraction_digits(&mp::to_decimal(x, reference.len() + 5), reference)
}

fn quarter(s: &str) -> Code {
    QuarterCode::parse(s).unwrap().expand()
}

fn criterion_1() -> Check {
    let got: Vec<u64> = [4, 8, 16].iter().map(|&n| count_codes(n).unwrap()).collect();
    let mut detail = format!("n = 4, 8, 16: {got:?}");
    let mut ok = got == [1, 11, 1087];
    if std::env::var("MAXPERIM_FULL").is_ok_and(|v| v == "1") {
        let c = count_codes(32).unwrap();
        ok &= c == 33_570_815;
        detail += &format!("; n = 32: {c}");
    } else {
        detail += "; n = 32 skipped (MAXPERIM_FULL=1)";
    }
    ensure(ok, detail)
}

fn criterion_2() -> Check {
    let rows = [
        (4, "+-", "6.533e-1"),
        (8, "+--+", "3.007e-1"),
        (16, "+--+-++-", "2.070e-2"),
        (32, "+-++--+-+-+---++", "3.409e-5"),
        (64, "-++++++-----+--+-+++--+---+--+++", "1.984e-9"),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (n, code, gap) in rows {
        let r = solve_ssp(&build_ssp(n).unwrap(), Arithmetic::Fixed128, None).unwrap();
        let q = QuarterCode::new(n, r.signs()).unwrap().expand();
        let code_ok = q.is_equivalent(&quarter(code));
        let got = mp::to_sci(&r.gap, 4);
        let gap_ok = got == gap;
        let time_ok = n != 64 || r.wall_time <= 60.0;
        ok &= code_ok && gap_ok && time_ok;
        let mut s = format!("n={n} code {} gap {got}", if code_ok { "ok" } else { "differs" });
        if !gap_ok {
            s += &format!(" (printed {gap})");
        }
        if n == 64 {
            s += &format!(" in {:.2}s", r.wall_time);
        }
        parts.push(s);
    }
    if !ok {
        parts.push("printed n=4/8 gaps are the optima with x_(n/2) fixed to 0".into());
    }
    ensure(ok, parts.join("; "))
}

const TABLE2: [(usize, &str, &str); 6] = [
    (4, "3.0352761804100830493955953504961933133962756052797220552560128292602278989952079876894718987769986620", "2.619e-2"),
    (8, "3.1211471340598313538646595036380865309095421664697601224524789123816403490428894959252350355455226792", "2.980e-4"),
    (16, "3.1365477164866073860859670319412282272981367658092326927892182035777457554738176289058573625428211593", "7.741e-7"),
    (32, "3.1403311569546193658254013805774586723120530983395218699104148559468837774634543964164383698560055119", "1.335e-13"),
    (64, "3.1412772509327728680619914155024682979562620963080964111750773439718362183509788657317267672710085186", "2.836e-23"),
    (128, "3.1415138011443010763285150594568223079171497753983126012200604676901080305902623648703203853047686174", "1.816e-38"),
];

fn criterion_3() -> Check {
    let opts = SolveOptions::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for (n, perimeter, gap) in TABLE2 {
        let q = (n == 128).then(|| QuarterCode::parse(published_quarter_code(128).unwrap()).unwrap());
        let sol = solve_two_phase(n, q, &opts).map_err(|e| format!("n={n}: {e}"))?;
        let d = digits(&sol.solution.report.perimeter, perimeter);
        let g = mp::to_sci(&sol.solution.polygon.gap, 4);
        ok &= d >= 90 && g == gap;
        parts.push(format!("n={n} {d} digits gap {g}"));
    }
    ensure(ok, parts.join("; "))
}

const OCTAGONS: [&str; 11] = [
    "3.121147134059831353864659503638086530909542",
    "3.119597665200247590150972423994095000480919",
    "3.119054312413247235616194871727970865400783",
    "3.116482146091382523455235401221637774453205",
    "3.114973336127984895463908314651370982428416",
    "3.114761898580578831178440524156298708342476",
    "3.108103162518355196717979437084906769281062",
    "3.103535201958031713403480443438109805364658",
    "3.086098603761994825497549583779800857552179",
    "3.080560813086617763393936898521174504202834",
    "3.045868912971898082696771250049682616532413",
];

fn criterion_4() -> Check {
    let opts = EnumerateOptions {
        solve: SolveOptions::default(),
        allow_large: false,
        checkpoint: None,
    };
    let ranked = enumerate_and_solve(8, &opts).map_err(|e| e.to_string())?;
    let p: Vec<Float> = ranked.converged().filter_map(|e| e.perimeter.clone()).collect();
    if p.len() != 11 {
        return Err(format!("{} converged local maxima", p.len()));
    }
    let min_digits = p.iter().zip(OCTAGONS).map(|(x, r)| digits(x, r)).min().unwrap();
    let forms = [
        (3, "12 sin(π/18) + 4 sin(π/12)"),
        (6, "8 sin(π/24) + 8 sin(π/12)"),
        (9, "1 + 6 sin(π/18) + 8 sin(π/24)"),
        (10, "1 + 4 sin(π/12) + 10 sin(π/30)"),
        (11, "2 + 12 sin(π/36)"),
    ];
    let closed = forms
        .iter()
        .filter(|(rank, expr)| closed_form_check(expr, &p[rank - 1], TOL).unwrap())
        .count();
    ensure(
        min_digits >= 40 && closed == 5,
        format!("11 maxima, min {min_digits} digits, {closed}/5 closed forms"),
    )
}

fn criterion_5() -> Check {
    let sol = solve_code(&quarter("+-"), &SolveOptions::default().newton(4)).map_err(|e| e.to_string())?;
    let exact = mp::pi_fraction(1, 12, PREC).sin() * 4u32 + 2u32;
    let d = mp::matching_fraction_digits(
        &mp::to_decimal(&sol.report.perimeter, 100),
        &mp::to_decimal(&exact, 100),
    );
    ensure(d >= 90, format!("2 + 4 sin(π/12) to {d} digits"))
}

fn criterion_6() -> Check {
    let opts = SolveOptions::default().newton(8);
    let p8 = solve_code(&quarter("+--+"), &opts).map_err(|e| e.to_string())?.report.perimeter;
    let p8sq = Float::with_val(PREC, p8.square_ref());
    let q8 = IntegerPolynomial::q8().map_err(|e| e.to_string())?;
    let at_p = verify_polynomial_root(&q8, &p8, TOL);
    let at_p2 = verify_polynomial_root(&q8, &p8sq, TOL);
    let q8_ok = at_p.confirmed != at_p2.confirmed
        && [&at_p, &at_p2].iter().any(|r| r.confirmed && r.backward_error < 1e-80);
    let which = if at_p2.confirmed { "p8^2" } else { "p8" };

    let e8 = IntegerPolynomial::e8();
    let s8 = Float::with_val(PREC, Float::parse("3.095609317476962").unwrap()) / 8u32;
    let at_s8 = verify_polynomial_root(&e8, &s8, TOL);
    let sq = e8.refine_root(&Float::with_val(PREC, s8.square_ref()), 30);
    let at_sq = verify_polynomial_root(&e8, &sq, TOL);
    let sq_match = digits(&(Float::with_val(PREC, sq.sqrt_ref()) * 8u32), "3.095609317476962") >= 15;
    let detail = format!(
        "q8 confirmed at {which} (backward error {}); E8 at s8: |E8| = {}, {}; E8 at s8^2: {}",
        mp::to_sci(if at_p2.confirmed { &at_p2.backward_error } else { &at_p.backward_error }, 2),
        mp::to_sci(&at_s8.value_abs, 3),
        if at_s8.confirmed { "root" } else { "not a root" },
        if at_sq.confirmed && sq_match { "root, 8 sqrt matches" } else { "no" },
    );
    ensure(q8_ok && at_s8.confirmed, detail)
}

fn criterion_7() -> Check {
    let printed = ["3.140331156954619", "3.140331156954543", "3.140331156954350"];
    let best = solve_best_codes(32, 3, &SolveOptions::default()).map_err(|e| e.to_string())?;
    let p: Vec<String> = best.iter().map(|(_, s)| mp::to_decimal(&s.report.perimeter, 40)).collect();
    let printed_ok = p.iter().zip(printed).all(|(s, r)| mp::matching_fraction_digits(s, r) >= 15);
    // 13 significant digits agree, the 16th differs
    let agree = p[1..].iter().all(|s| {
        let d = mp::matching_fraction_digits(s, &p[0]);
        (12..15).contains(&d)
    });
    ensure(
        printed_ok && agree,
        format!("{} / {} / {}", &p[0][..17], &p[1][..17], &p[2][..17]),
    )
}

fn random_state(code: &Code, rng: &mut ChaCha8Rng) -> KktState {
    let n = code.n();
    let mut cuts: Vec<f64> = (1..n).map(|_| rng.gen_range(0.02..0.98)).collect();
    cuts.sort_by(f64::total_cmp);
    let pi = mp::pi(PREC);
    KktState {
        angles: AngleVector::from_free(cuts.iter().map(|&t| Float::with_val(PREC, &pi * t)).collect(), PREC),
        multipliers: [
            Float::with_val(PREC, rng.gen_range(-1.0..1.0)),
            Float::with_val(PREC, rng.gen_range(-1.0..1.0)),
        ],
    }
}

fn rel_err(a: &Float, b: &Float) -> Float {
    let scale = Float::with_val(PREC, b.clone().abs().max(&Float::with_val(PREC, 1)));
    Float::with_val(PREC, a - b).abs() / scale
}

fn finite_differences() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = mp::pow2_neg(120, PREC);
    let two_h = Float::with_val(PREC, &h * 2u32);
    let bound = mp::pow2_neg(120, PREC);
    for code in [quarter("+--+"), quarter("+--+-++-")] {
        let m = code.n() - 1;
        let s = random_state(&code, &mut rng);
        let grad = kkt_gradient(&s, &code).unwrap();
        let k = kkt_matrix(&s, &code).unwrap();
        for i in 0..m + 2 {
            let mut vp = s.to_vector();
            let mut vm = s.to_vector();
            vp[i] += &h;
            vm[i] -= &h;
            let (plus, minus) = (KktState::from_vector(&vp, PREC), KktState::from_vector(&vm, PREC));
            let dl = (lagrangian(&plus, &code).unwrap() - lagrangian(&minus, &code).unwrap()) / &two_h;
            if rel_err(&dl, &grad[i]) > bound {
                return false;
            }
            if i >= m {
                continue;
            }
            let (gp, gm) = (kkt_gradient(&plus, &code).unwrap(), kkt_gradient(&minus, &code).unwrap());
            for r in 0..m + 2 {
                let fd = Float::with_val(PREC, &gp[r] - &gm[r]) / &two_h;
                let exact = if r >= m {
                    k.jac[r - m][i].clone()
                } else if r == i {
                    k.diag[i].clone()
                } else if r + 1 == i {
                    k.off[r].clone()
                } else if i + 1 == r {
                    k.off[i].clone()
                } else {
                    mp::zero(PREC)
                };
                if rel_err(&fd, &exact) > bound {
                    return false;
                }
            }
        }
    }
    true
}

fn regular_eigenpairs() -> bool {
    let tol = mp::pow2_neg(300, PREC);
    for (n, q) in [(8, "+--+"), (16, "+--+-++-")] {
        let k = kkt_matrix(&init_regular(n, PREC), &quarter(q)).unwrap();
        let s2 = mp::pi_fraction(1, 2 * n as i64, PREC).sin() / 2u32;
        for l in 1..n {
            let lambda = (1 - mp::pi_fraction(l as i64, n as i64, PREC).cos()) * Float::with_val(PREC, &s2);
            let v: Vec<Float> = (1..n).map(|i| mp::pi_fraction((i * l) as i64, n as i64, PREC).sin()).collect();
            for i in 0..n - 1 {
                let mut hv = Float::with_val(PREC, &k.diag[i] * &v[i]);
                if i > 0 {
                    hv += Float::with_val(PREC, &k.off[i - 1] * &v[i - 1]);
                }
                if i + 2 < n {
                    hv += Float::with_val(PREC, &k.off[i] * &v[i + 1]);
                }
                if Float::with_val(PREC, hv - Float::with_val(PREC, &lambda * &v[i])).abs() > tol {
                    return false;
                }
            }
        }
    }
    true
}

fn gram_determinant() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let code = quarter("+--+-++-");
    (0..10).all(|_| {
        let (det, closed) = constraint_gram(&random_state(&code, &mut rng), &code).unwrap();
        rel_err(&det, &closed) < mp::pow2_neg(300, PREC)
    })
}

fn lemma1() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let zero = Float::new(128);
    (0..200).all(|_| {
        let n = rng.gen_range(3..=10);
        let r: f64 = rng.gen_range(0.4..0.65);
        let mut t: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
        t.sort_by(f64::total_cmp);
        let v: Vec<Complex> = t
            .iter()
            .map(|a| Complex {
                re: Float::with_val(128, r * a.cos()),
                im: Float::with_val(128, r * a.sin()),
            })
            .collect();
        // the difference body is the hull of pairwise differences
        let diffs_in_disc = v.iter().all(|a| v.iter().all(|b| (a - b).norm() <= 1));
        diffs_in_disc == is_small(&v, &zero)
    })
}

fn odd_divisors() -> bool {
    let tol = mp::pow2_neg(PREC - 8, PREC);
    [(6, 3), (9, 3), (9, 9), (12, 3)].iter().all(|&(n, d)| {
        let code = odd_divisor_code(n, d).unwrap();
        let regular = AngleVector::regular(n, PREC);
        residual(&code, PREC).norm() < tol
            && constraints(&regular, &code).iter().all(|g| g.clone().abs() < tol)
            && Float::with_val(PREC, regular.perimeter() - upper_bound(n, PREC)).abs() < tol
    })
}

fn ssp_brute_force() -> bool {
    [4, 8, 16, 32].iter().all(|&n| {
        let inst = build_ssp(n).unwrap();
        let m = n / 2;
        let (w, b) = (inst.fixed_weights(), inst.fixed_budget());
        let best = (0u64..1 << m)
            .filter_map(|mask| {
                let x: Vec<bool> = (0..m).map(|j| mask >> (m - 1 - j) & 1 == 1).collect();
                let sum: i128 = w.iter().zip(&x).filter(|(_, &t)| t).map(|(w, _)| w).sum();
                (sum <= b).then_some((b - sum, x))
            })
            .min()
            .unwrap();
        let r = solve_ssp(&inst, Arithmetic::Fixed128, None).unwrap();
        r.gap_numerator == Some(best.0) && r.selection == best.1
    })
}

fn suffix_merge() -> bool {
    let inst = build_ssp(32).unwrap();
    let global = solve_ssp(&inst, Arithmetic::Fixed128, None).unwrap();
    let parts = parallel_split(&inst, 4)
        .unwrap()
        .iter()
        .map(|s: &Suffix| solve_ssp(&inst, Arithmetic::Fixed128, Some(s)))
        .collect();
    merge_results(parts, 0.0).unwrap().selection == global.selection
}

fn octagon_round_trip() -> bool {
    let opts = SolveOptions::default().newton(8);
    let tol = mp::pow2_neg(TOL - 8, PREC);
    enumerate_codes(8).unwrap().all(|code| {
        let sol = solve_code(&code, &opts).unwrap();
        let g = diameter_graph(&sol.polygon, &default_unit_tolerance(TOL, PREC));
        zonogon_check(&sol.polygon, &tol).is_ok_and(|z| z.recovered.canonical() == code.canonical())
            && g.core_cycle_length() == Some(code_to_composition(&code).len())
    })
}

fn criterion_8() -> Check {
    let suites: [(&str, fn() -> bool); 8] = [
        ("finite differences", finite_differences),
        ("regular eigenpairs", regular_eigenpairs),
        ("Gram determinant", gram_determinant),
        ("smallness", lemma1),
        ("odd divisors", odd_divisors),
        ("SSP brute force", ssp_brute_force),
        ("suffix merge", suffix_merge),
        ("octagon round trip", octagon_round_trip),
    ];
    let results: Vec<(&str, bool)> = suites
        .iter()
        .map(|(name, f)| (*name, catch_unwind(f).unwrap_or(false)))
        .collect();
    let failed: Vec<&str> = results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    ensure(
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} suites", results.len())
        } else {
            format!("failed: {}", failed.join(", "))
        },
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 8] = [
        ("code counts", criterion_1),
        ("phase I gaps and codes", criterion_2),
        ("perimeters", criterion_3),
        ("octagon ranking", criterion_4),
        ("quadrilateral closed form", criterion_5),
        ("algebraic verification", criterion_6),
        ("n = 32 near-degeneracy", criterion_7),
        ("property suites", criterion_8),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let (tag, detail) = match result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {}. {name}: {detail}", i + 1);
    }
    println!("{} of {} criteria pass", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
