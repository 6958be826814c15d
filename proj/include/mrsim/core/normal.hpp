#pragma once

namespace mrsim {

/// Phi(x), evaluated through erfc so the lower tail keeps full relative precision.
double std_normal_cdf(double x);

/// Phi^{-1}(p) for p in (0, 1). Throws ParameterError outside that range.
double std_normal_quantile(double p);

} // namespace mrsim
