"""Acceptance gate: one test per criterion, each printing a pass/fail line
with the measured numbers at the criterion's stated tolerance.

Every oracle here is independent of the code path it checks: adaptive
quadrature for special functions, scalar convolution and per-subcarrier
models for the simulator chain, closed forms against raw Monte Carlo for
the statistics.  Outcomes are deterministic for the fixed seed below.

Four sub-criteria fail by design rather than by implementation error.  The
three figure-level anchors in 7a/7b/7c-NOCSIT sit 2%-70% above what the
reference configuration can attain (exact quadrature of the same model
confirms the Monte Carlo values), and the literal Gram-diagonality property
in criterion 8 is unattainable for any admissible precoder: a Gram matrix
with more nonzero rows than its rank cannot be diagonal.  They are asserted
as stated and left red; the per-test comments carry the short version of
the analysis.
"""

import time
import warnings

import numpy as np
import pytest
from scipy import integrate, stats

from convsup.capacity import (EULER_GAMMA, bessel_k, c_pu_direct,
                              c_pu_lower, c_su_lower_csit, c_su_lower_nocsit,
                              check_pu_monotonicity, outage_mc, psi,
                              pu_outage_probability)
from convsup.channel import draw_channels, zmcscg
from convsup.harness import (build_scenario, frame_equivalence_errors,
                             reference_link_specs, relayed_noise_identity_error,
                             resolve_d12, validate_suite)
from convsup.precoding import (csit_objective, power_residual,
                               realize_precoders, uc_power_coefficient,
                               uniform_profile, waterfilling_profile)
from convsup.spectral import (InconsistentResponseError, build_spectral_context,
                              build_vc_layout, filter_frequency_response,
                              min_norm_filter)
from convsup.transceiver import FrameConfig, required_cp_length, stx_power_mc

SEED = 20260809
TRIALS = 100_000


def _rng(tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((SEED, tag)))


def _report(criterion: str, ok: bool, detail: str) -> bool:
    print(f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")
    return ok


@pytest.fixture(scope="module")
def reference():
    ctx = build_spectral_context(64, 10)
    layout = build_vc_layout(ctx, (0, 16, 32, 48))
    specs = reference_link_specs()
    l_cp = required_cp_length(specs, 10)
    assert l_cp == 16
    cfg = FrameConfig(ctx=ctx, layout=layout, l_cp=l_cp, specs=specs)
    return ctx, layout, cfg


def test_criterion_1_frequency_domain_equivalence(reference):
    _, _, cfg = reference
    scenario = build_scenario(0.3, 1.0, 20.0, "pu")
    start = time.monotonic()
    worst_pu, worst_su = frame_equivalence_errors(scenario, cfg, 1000, _rng(1))
    elapsed = time.monotonic() - start
    ok = worst_pu <= 1e-10 and worst_su <= 1e-10 and elapsed <= 60.0
    assert _report(
        "criterion 1 (frequency-domain equivalence)", ok,
        f"1000 noiseless frames: max rel err PRx {worst_pu:.2e}, "
        f"SRx {worst_su:.2e}, runtime {elapsed:.1f}s")


def test_criterion_2_noise_path_identity(reference):
    _, _, cfg = reference
    scenario = build_scenario(0.3, 1.0, 20.0, "pu")
    worst = relayed_noise_identity_error(scenario, cfg, 300, _rng(2))
    assert _report(
        "criterion 2 (relayed-noise circular identity)", worst <= 1e-10,
        f"prefix-structured secondary noise: max rel err {worst:.2e}")


def test_criterion_3_special_functions():
    worst_psi = 0.0
    for a in np.logspace(-4, 6, 41):
        ref, _ = integrate.quad(lambda u, aa=a: np.exp(-u) * np.log1p(aa * u),
                                0, np.inf, limit=400)
        worst_psi = max(worst_psi, abs(psi(a) - ref) / abs(ref))

    def k_quad(order, x):
        if order == 0:
            val, _ = integrate.quad(lambda t: np.exp(-x * t) / np.sqrt(t * t - 1),
                                    1, np.inf, limit=400, epsabs=1e-14, epsrel=1e-12)
            return val
        val, _ = integrate.quad(lambda t: np.exp(-x * t) * np.sqrt(t * t - 1),
                                1, np.inf, limit=400, epsabs=1e-14, epsrel=1e-12)
        return x * val  # sqrt(pi)(x/2)/Gamma(3/2) = x

    worst_k = 0.0
    for x in (0.02, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0):
        for order in (0, 1):
            ref = k_quad(order, x)
            worst_k = max(worst_k, abs(bessel_k(order, x) - ref) / ref)

    small = abs(psi(1e-3) / 1e-3 - 1.0)
    large = abs(psi(1e6) / (np.log1p(1e6) - EULER_GAMMA) - 1.0)
    ok = worst_psi <= 1e-8 and worst_k <= 1e-8 and small <= 2e-3 and large <= 1e-4
    assert _report(
        "criterion 3 (special functions)", ok,
        f"psi-vs-quadrature {worst_psi:.2e}, K-vs-quadrature {worst_k:.2e}, "
        f"asymptote deviations {small:.2e} (<=2e-3) and {large:.2e} (<=1e-4)")


def test_criterion_4_outage_closed_form(reference):
    _, layout, _ = reference
    details = []
    ok = True
    for i, kap in enumerate((0.05, 0.2, 1.0)):
        scenario = build_scenario(kap ** (2.0 / 3.0), 1.0, 20.0, "pu")
        prof_a = uniform_profile(layout, scenario, 0.0)
        prof_b = uniform_profile(layout, scenario,
                                 0.5 * scenario.p_su / layout.m_vc)
        seed = (SEED, 40 + i)
        p_a, se = outage_mc(scenario, prof_a, TRIALS,
                            np.random.default_rng(seed))
        p_b, _ = outage_mc(scenario, prof_b, TRIALS,
                           np.random.default_rng(seed))
        closed = pu_outage_probability(scenario)
        ok &= abs(p_a - closed) <= 3.0 * se and p_a == p_b
        details.append(f"k={kap}: mc {p_a:.4f} vs closed {closed:.4f} "
                       f"({abs(p_a - closed) / se:.1f} se, profile-invariant "
                       f"{'yes' if p_a == p_b else 'NO'})")
    assert _report("criterion 4 (outage closed form)", ok, "; ".join(details))


def test_criterion_5_waterfilling():
    ctx = build_spectral_context(8, 5)
    layout = build_vc_layout(ctx, (0, 4))
    rng = _rng(5)
    worst_resid, n_beaten = 0.0, 0
    for _ in range(1000):
        scenario = build_scenario(float(rng.uniform(0.2, 1.5)),
                                  float(rng.uniform(0.5, 4.0)),
                                  float(rng.uniform(0.0, 25.0)), "su")
        h_su, h_24 = zmcscg(rng, 8), zmcscg(rng, 8)
        prof = waterfilling_profile(layout, scenario, h_su, h_24)
        worst_resid = max(worst_resid,
                          abs(power_residual(prof, scenario)) / scenario.p_su)
        uni = uniform_profile(layout, scenario, 0.4 * scenario.p_su / layout.m_vc)
        if (csit_objective(prof, scenario, h_su, h_24)
                < csit_objective(uni, scenario, h_su, h_24) - 1e-12):
            n_beaten += 1

    scenario = build_scenario(0.7, 1.0, 15.0, "su")
    h_su, h_24 = zmcscg(rng, 8), zmcscg(rng, 8)
    prof = waterfilling_profile(layout, scenario, h_su, h_24)
    wf_obj = csit_objective(prof, scenario, h_su, h_24)
    coef = uc_power_coefficient(scenario)
    nu = scenario.link_variance(1, 4) * scenario.p_pu + scenario.sigma2_v[4]
    uc_gain = np.abs(h_su[list(layout.uc_indices)]) ** 2 / nu
    vc_gain = np.abs(h_24[list(layout.vc_indices)]) ** 2 / scenario.sigma2_v[4]
    best = -np.inf
    for _ in range(10):
        w = rng.exponential(size=(100_000, 8))
        w /= w.sum(axis=1, keepdims=True)
        spend = w * scenario.p_su
        obj = (np.log2(1 + spend[:, :6] / coef * uc_gain).sum(axis=1)
               + np.log2(1 + spend[:, 6:] * vc_gain).sum(axis=1))
        best = max(best, float(obj.max()))
    margin = best - wf_obj
    ok = worst_resid <= 1e-9 and n_beaten == 0 and margin <= 1e-9
    assert _report(
        "criterion 5 (waterfilling)", ok,
        f"max budget residual {worst_resid:.2e}, uniform beat it {n_beaten}x "
        f"in 1000 instances, best of 1e6 random profiles trails the "
        f"waterfilling objective by {-margin:.4f} bits")


def test_criterion_6_budget_monotonicity(reference):
    _, layout, _ = reference
    scenario = build_scenario(0.05 ** (2.0 / 3.0), 1.0, 20.0, "pu")
    ok, report = check_pu_monotonicity(scenario, layout,
                                       np.geomspace(0.25, 2.0, 8),
                                       20_000, SEED)
    assert _report(
        "criterion 6 (primary-bound monotonicity in the secondary budget)",
        ok and report["hypothesis_met"],
        f"kappa={report['kappa']:.3f}, 8-point budget grid under common "
        f"random numbers, violations: {len(report['violations'])}")


def _delta_c_pu(layout, d12_ratio, power_ratio, snr_db, rng, n_trials=TRIALS):
    scenario = build_scenario(resolve_d12(d12_ratio, "d13"), power_ratio,
                              snr_db, "pu")
    g = 0.5 * scenario.p_su / layout.m_vc
    profile = uniform_profile(layout, scenario, g)
    lo, se = c_pu_lower(scenario, layout, profile, n_trials, rng)
    return lo - c_pu_direct(scenario, layout), se


def test_criterion_7a_pu_gain_anchor(reference):
    # known shortfall: exact quadrature of the same model gives 0.014646 at
    # exactly 20 dB; the gain crosses 0.015 only near 25 dB and plateaus at
    # 0.01526 for this configuration
    _, layout, _ = reference
    delta, se = _delta_c_pu(layout, 0.3, 1.0, 20.0, _rng(71))
    ok = delta >= 0.015 - 3.0 * se
    assert _report(
        "criterion 7a (PU gain >= 0.015 b/s/Hz at SNR_PU=20dB, d12/d13=0.3, "
        "P_su=P_pu)", ok,
        f"measured {delta:.6f} +- {se:.1e} ({delta * 20:.3f} Mbps at 20 MHz)")


def test_criterion_7b_pu_gain_anchor_double_power(reference):
    # known shortfall: doubling the secondary budget can at most double the
    # gain (concavity), so 0.09 is unreachable from a 0.015-level baseline
    _, layout, _ = reference
    delta, se = _delta_c_pu(layout, 0.3, 2.0, 20.0, _rng(72))
    ok = delta >= 0.09 - 3.0 * se
    assert _report(
        "criterion 7b (PU gain >= 0.09 b/s/Hz at P_su/P_pu=2, d12/d13=0.3)",
        ok, f"measured {delta:.6f} +- {se:.1e} ({delta * 20:.3f} Mbps at 20 MHz)")


def test_criterion_7c_su_capacity_anchor_csit(reference):
    _, layout, _ = reference
    scenario = build_scenario(resolve_d12(0.7, "d14"), 1.0, 20.0, "su")
    csit, se_c = c_su_lower_csit(scenario, layout, TRIALS, _rng(73))
    ok_csit = csit >= 0.55 - 3.0 * se_c
    assert _report(
        "criterion 7c-CSIT (C_SU >= 0.55 b/s/Hz at d12/d14=0.7, SNR_SU=20dB)",
        ok_csit, f"measured {csit:.4f} +- {se_c:.1e} ({csit * 20:.1f} Mbps)")


def test_criterion_7c_su_capacity_anchor_nocsit(reference):
    # known shortfall by ~0.2%: with the reference M=64 and the secondary
    # budget split evenly between carrier classes the true value is 0.3992
    _, layout, _ = reference
    scenario = build_scenario(resolve_d12(0.7, "d14"), 1.0, 20.0, "su")
    g = 0.5 * scenario.p_su / layout.m_vc
    nocsit, se_n = c_su_lower_nocsit(scenario, layout, g, TRIALS, _rng(74))
    ok_no = nocsit >= 0.40 - 3.0 * se_n
    assert _report(
        "criterion 7c-NOCSIT (C_SU >= 0.40 b/s/Hz at d12/d14=0.7, SNR_SU=20dB)",
        ok_no, f"measured {nocsit:.4f} +- {se_n:.1e} ({nocsit * 20:.1f} Mbps)")


def test_criterion_7d_trends(reference):
    _, layout, _ = reference
    ok = True
    details = []

    # PU gain increases with the power ratio
    gains = []
    for i, pr in enumerate((1.0, 2.0, 4.0)):
        gains.append(_delta_c_pu(layout, 0.3, pr, 20.0, _rng(750 + i)))
    for (d0, s0), (d1, s1) in zip(gains, gains[1:]):
        ok &= d1 - d0 >= -3.0 * np.hypot(s0, s1)
    details.append("dC_PU vs P_su/P_pu {1,2,4}: "
                   + " -> ".join(f"{d:.4f}" for d, _ in gains))

    # PU gain decreases with d12/d13
    gains = []
    for i, ratio in enumerate((0.3, 0.5, 0.7)):
        gains.append(_delta_c_pu(layout, ratio, 1.0, 20.0, _rng(760 + i)))
    for (d0, s0), (d1, s1) in zip(gains, gains[1:]):
        ok &= d1 - d0 <= 3.0 * np.hypot(s0, s1)
    details.append("dC_PU vs d12/d13 {.3,.5,.7}: "
                   + " -> ".join(f"{d:.4f}" for d, _ in gains))

    # SU capacity improves as d12/d14 grows; CSIT dominates NOCSIT throughout
    cs, no = [], []
    for i, ratio in enumerate((0.3, 0.5, 0.7)):
        scenario = build_scenario(resolve_d12(ratio, "d14"), 1.0, 20.0, "su")
        g = 0.5 * scenario.p_su / layout.m_vc
        cs.append(c_su_lower_csit(scenario, layout, TRIALS, _rng(770 + i)))
        no.append(c_su_lower_nocsit(scenario, layout, g, TRIALS, _rng(780 + i)))
    for series in (cs, no):
        for (v0, s0), (v1, s1) in zip(series, series[1:]):
            ok &= v1 - v0 >= -3.0 * np.hypot(s0, s1)
    for (vc_, sc_), (vn, sn) in zip(cs, no):
        ok &= vc_ - vn >= -3.0 * np.hypot(sc_, sn)
    details.append("C_SU(CSIT) vs d12/d14: "
                   + " -> ".join(f"{v:.3f}" for v, _ in cs))
    details.append("C_SU(NOCSIT) vs d12/d14: "
                   + " -> ".join(f"{v:.3f}" for v, _ in no))
    assert _report("criterion 7d (monotone trends)", ok, "; ".join(details))


def test_criterion_8_property_suites(reference):
    ctx, layout, cfg = reference
    scenario = build_scenario(0.3, 1.0, 20.0, "pu")
    ok = True
    details = []

    # consistency law of realizable responses
    rng = _rng(81)
    worst = 0.0
    for _ in range(200):
        f = filter_frequency_response(ctx, zmcscg(rng, 11))
        rec = filter_frequency_response(ctx, min_norm_filter(ctx, f))
        worst = max(worst, np.linalg.norm(rec - f) / np.linalg.norm(f))
    fired = False
    try:
        min_norm_filter(ctx, zmcscg(rng, 64))
    except InconsistentResponseError:
        fired = True
    ok &= worst <= 1e-10 and fired
    details.append(f"consistency law rel err {worst:.1e}, rejection fires: {fired}")

    # product-magnitude law against the Bessel density
    s23 = scenario.link_variance(2, 3)
    z = s23 * rng.exponential(size=1_000_000) * rng.exponential(size=1_000_000)

    def product_cdf(v):
        t = 2.0 * np.sqrt(np.maximum(v, 0.0) / s23)
        with np.errstate(invalid="ignore"):
            return np.where(t > 0, 1.0 - t * bessel_k(1, np.maximum(t, 1e-300)), 0.0)

    p_prod = stats.kstest(z, product_cdf).pvalue
    ok &= p_prod > 0.01
    details.append(f"product-density KS p={p_prod:.3f}")

    # exponential law of the squared frequency response
    draws = np.empty(TRIALS)
    rng_ch = _rng(82)
    for i in range(TRIALS):
        draws[i] = np.abs(draw_channels(scenario, cfg.specs, 8,
                                        rng_ch).freq[2, 3][0]) ** 2
    p_exp = stats.kstest(draws, "expon", args=(0.0, s23)).pvalue
    ok &= p_exp > 0.01
    details.append(f"exponential-law KS p={p_exp:.3f} over {TRIALS} draws")

    # transmit-power accounting over simulated frames
    g = 0.5 * scenario.p_su / layout.m_vc
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pre = realize_precoders(ctx, layout, uniform_profile(layout, scenario, g))
    mean, se = stx_power_mc(cfg, scenario, pre, TRIALS, _rng(83))
    ok &= abs(mean - scenario.p_su) <= 3.0 * se
    details.append(f"E||z2||^2 = {mean:.5f} vs 1.0 ({abs(mean - 1) / se:.1f} se)")

    # full validation sweep stays inside the ten-minute budget
    start = time.monotonic()
    report = validate_suite(seed=SEED, trials=20_000, n_frames=200,
                            search_points=200_000)
    elapsed = time.monotonic() - start
    ok &= report.ok and elapsed <= 600.0
    details.append(f"validate suite {'PASS' if report.ok else 'FAIL'} "
                   f"in {elapsed:.0f}s")

    assert _report("criterion 8 (property suites)", ok, "; ".join(details))


def test_criterion_8_gram_diagonalization(reference):
    # literal reading: the composite receive Gram matrix of the realized
    # precoder pair is diagonal to 1e-9 of its trace.  Not attainable: a
    # diagonal A A^H needs pairwise-orthogonal rows, i.e. at most rank(A)=7
    # nonzero rows, while 60 used subcarriers are active, so the relayed
    # branch always carries structural off-diagonal mass.  The
    # exactly-verifiable parts (virtual-carrier branch diagonality, null
    # rows, Hadamard direction) are covered by criterion 8 above and the
    # precoder test module.
    ctx, layout, cfg = reference
    scenario = build_scenario(0.3, 1.0, 20.0, "pu")
    g = 0.5 * scenario.p_su / layout.m_vc
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pre = realize_precoders(ctx, layout, uniform_profile(layout, scenario, g))
    rng = _rng(84)
    ch = draw_channels(scenario, cfg.specs, cfg.m, rng)
    x_pu = zmcscg(rng, layout.q, scenario.p_pu)
    v2 = zmcscg(rng, cfg.m, scenario.sigma2_v[2])
    h_su = ch.freq[2, 4] * (ch.freq[1, 2] * (layout.theta @ x_pu) + v2)
    gram = ((h_su[:, None] * pre.a) @ (h_su[:, None] * pre.a).conj().T
            + (ch.freq[2, 4][:, None] * pre.g) @ (ch.freq[2, 4][:, None] * pre.g).conj().T)
    off = gram - np.diag(np.diag(gram))
    ratio = np.linalg.norm(off, "fro") / np.trace(gram).real
    ok = ratio <= 1e-9
    assert _report(
        "criterion 8 (SU Gram diagonalization, literal)", ok,
        f"off-diagonal Frobenius mass / trace = {ratio:.3f} (required <= 1e-9)")
