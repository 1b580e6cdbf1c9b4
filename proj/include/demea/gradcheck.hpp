#pragma once
// Central finite-difference checks of every analytic backward pass, in double precision.

#include <cstdint>
#include <string>

namespace demea {

enum class GradScope { Edl, Spiral, Spectral, Fc, Elu, Loss, End2End };

std::string to_string(GradScope scope);
GradScope parse_grad_scope(const std::string& s);

inline constexpr double kFiniteDifferenceStep = 1e-5;

/// |a - n| / max(|a|, |n|, 1e-6)
double relative_error(double analytic, double numeric);

struct GradcheckReport {
  GradScope scope = GradScope::Edl;
  std::uint64_t seed = 0;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::string worst;  // label of the worst entry

  bool passed() const { return checked > 0 && max_rel_error < tolerance; }
};

/// Tolerance 1e-4 for single layers, 1e-3 end to end. `corrupt` perturbs one analytic
/// partial so the check must fail.
GradcheckReport run_gradcheck(GradScope scope, std::uint64_t seed, bool corrupt = false);

}  // namespace demea
