#!/usr/bin/env python3
"""Two-resolution refinement study (CI-style margin tracking).

Margins must not systematically decrease under refinement; spectra and
saturation gaps must improve.  Prints one table row per quantity.
"""
import numpy as np

from heatlab import ModelSpec, build_model, node_nearest, spectral_decompose
from heatlab.checks import check_cd, check_li_yau
from heatlab.suites import NamedField, bump_fields, eigen_fields


def sphere_cd(mt):
    model, oracle, _ = build_model(ModelSpec("sphere", dim=2, resolution=mt))
    spectral = spectral_decompose(model, k=60)
    rep = check_cd(model, oracle, eigen_fields(model, spectral, seed=0),
                   mode="riemannian", include_gamma_lemma=False)
    lam_err = abs(spectral.eigenvalues[1] - 2.0) / 2.0
    return rep.min_margin / rep.scale, lam_err


def flat_li_yau(m):
    model, oracle, _ = build_model(
        ModelSpec("euclidean", dim=2, resolution=m, extent=1.5))
    spectral = spectral_decompose(model, k=min(500, model.n_nodes))
    i0 = node_nearest(model, [0.0, 0.0])
    delta = np.zeros(model.n_nodes)
    delta[i0] = 1.0 / model.mu[i0]
    suite = [NamedField("point-source", model.field(delta))]
    suite += bump_fields(model, centers=[i0], width=0.25)
    rep = check_li_yau(model, oracle, spectral, suite, [0.05, 0.1],
                       mode="rho0", saturation_fields=("point-source",),
                       saturation_rtol=1.0)
    sat = [s for s in rep.samples if s["field"].endswith("|saturation")][0]
    return rep.min_margin / rep.scale, sat["lhs"] / rep.scale


def main():
    print(f"{'quantity':42s} {'coarse':>12s} {'fine':>12s}")
    a24, e24 = sphere_cd(24)
    a32, e32 = sphere_cd(32)
    print(f"{'sphere CD rel min margin (mt 24 -> 32)':42s} {a24:12.5f} {a32:12.5f}")
    print(f"{'sphere gap rel error':42s} {e24:12.2e} {e32:12.2e}")
    assert a32 >= a24 - 0.005, "margin deteriorated under refinement"
    assert e32 < e24

    l32, s32 = flat_li_yau(32)
    l48, s48 = flat_li_yau(48)
    print(f"{'flat li-yau rel min margin (m 32 -> 48)':42s} {l32:12.5f} {l48:12.5f}")
    print(f"{'flat saturation rel gap':42s} {s32:12.2e} {s48:12.2e}")
    assert l48 >= l32 - 0.005
    print("refinement study: margins are monotone-safe")


if __name__ == "__main__":
    main()
