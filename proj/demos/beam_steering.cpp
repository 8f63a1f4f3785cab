// Copyright 2026 The qphm Authors
// SPDX-License-Identifier: Apache-2.0

// Steers a 16 x 1 one-bit coded array from 45 degrees incidence towards a
// chosen azimuth, then prints the scattered pattern on the principal cut.
//
//   beam_steering [target_azimuth_deg]

#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <string>

#include "qphm/hpe.hpp"
#include "qphm/precond.hpp"
#include "qphm/r3m.hpp"
#include "qphm/solver.hpp"
#include "qphm/synthesis.hpp"

using namespace qphm;

int main(int argc, char** argv) {
  const double target_az = argc > 1 ? std::atof(argv[1]) : -30.0;
  const double wavelength = 1.0;
  const Pitch pitch{0.5, 0.5};
  const ArrayLayout layout{16, 1};
  const BeamTarget incident{45.0, 0.0};
  const BeamTarget target{target_az, 0.0};

  try {
    validate(target);
    const auto tpl = build_stacked_state_template(2, 1, pitch, 0.0, 0.318);
    const SiteSet sites(tpl, layout);
    const auto kernel = make_helmholtz(wavelength, default_self_term(tpl));
    const auto assembled = assemble_virtual(sites, kernel, HParams{});
    const auto near = extract_near_field(assembled.matrix);

    const auto cb = phase_gradient_codebook(layout, pitch, incident, target, wavelength, 1);
    const auto D = build_mask(tpl, layout, cb);
    const Vector U = plane_wave_rhs(sites, direction(incident) * -1.0, 1.0, kernel.wavenumber);
    const auto M = factorize(near, D);
    const auto rep = bicgstab(masked_operator(assembled.matrix, D), masked_rhs(U, D),
                              as_preconditioner(M), SolveOptions{}, &D);

    std::cout << "N = " << sites.size() << ", codebook ";
    for (Index i = 0; i < layout.m; ++i) std::cout << cb.at(i, 0);
    std::cout << "\nBiCGStab: " << rep.iterations << " iterations, relres " << rep.final_relres()
              << (rep.converged ? "" : " (not converged)") << "\n";

    const auto ff = far_field(sites, rep.x, kernel.wavenumber, GridSpec::principal_cut(5.0));
    const auto lobe = main_lobe(ff);
    double peak = -1e300;
    for (Index k = 0; k < ff.values.size(); ++k) peak = std::max(peak, ff.db(k));
    for (Index k = 0; k < ff.values.size(); ++k) {
      const int bar = std::max(0, static_cast<int>((ff.db(k) - peak + 40.0) * 1.5));
      std::cout << std::setw(5) << ff.directions[k].azimuth << " " << std::setw(7)
                << std::fixed << std::setprecision(1) << ff.db(k) << " " << std::string(bar, '#')
                << "\n";
    }
    std::cout << "main lobe at azimuth " << lobe.direction.azimuth << " (target " << target_az
              << ")\n";
    return rep.converged ? 0 : 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
