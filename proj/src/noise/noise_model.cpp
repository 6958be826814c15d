#include "mrsim/noise/noise_model.hpp"

#include <cmath>
#include <string>

namespace mrsim::noise {

NoiseParams NoiseParams::pre_trim(double sigma_fab) {
  NoiseParams p;
  p.regime = TrimRegime::PreTrim;
  p.sigma_fab = sigma_fab;
  return p;
}

NoiseParams NoiseParams::post_trim(double jitter_std_pm, double jitter_bias_pm) {
  NoiseParams p;
  p.regime = TrimRegime::PostTrim;
  p.jitter_std_pm = jitter_std_pm;
  p.jitter_bias_pm = jitter_bias_pm;
  return p;
}

NoiseParams NoiseParams::sweep_point(double sigma_fab) {
  NoiseParams p;
  p.sigma_fab = sigma_fab;
  p.sigma_thermal = 0.1;
  p.sigma_laser = 0.05;
  return p;
}

bool NoiseParams::is_noiseless() const noexcept {
  const bool jitter_off =
      regime == TrimRegime::PreTrim || (jitter_std_pm == 0.0 && jitter_bias_pm == 0.0);
  return sigma_fab == 0.0 && sigma_thermal == 0.0 && sigma_laser == 0.0 && jitter_off;
}

double NoiseParams::total_variance() const noexcept {
  return sigma_fab * sigma_fab + sigma_thermal * sigma_thermal + sigma_laser * sigma_laser;
}

void NoiseParams::validate() const {
  auto check_std = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ParameterError(std::string("noise: ") + name + " must be finite and >= 0");
    }
  };
  check_std(sigma_fab, "sigma_fab");
  check_std(sigma_thermal, "sigma_thermal");
  check_std(sigma_laser, "sigma_laser");
  if (!(linewidth_nm > 0.0) || !std::isfinite(linewidth_nm)) {
    throw ParameterError("noise: linewidth_nm must be > 0");
  }
  if (!std::isfinite(jitter_bias_pm)) {
    throw ParameterError("noise: jitter_bias_pm must be finite");
  }
  if (regime == TrimRegime::PostTrim && !(jitter_std_pm >= 0.0 && jitter_std_pm <= 100.0)) {
    throw ParameterError("noise: post-trim jitter_std_pm must lie in [0, 100]");
  }
}

double sigma_fab_from_jitter(double sigma_lambda_pm, double linewidth_nm) {
  if (!(linewidth_nm > 0.0)) {
    throw ParameterError("sigma_fab_from_jitter: linewidth must be > 0");
  }
  return (sigma_lambda_pm * 1e-3) / linewidth_nm;
}

namespace {

Matrix draw_block(const SeedContext& ctx, double std, Eigen::Index rows, Eigen::Index cols) {
  Matrix m = Matrix::Zero(rows, cols);
  if (std == 0.0) {
    return m;
  }
  const RandomStream stream(ctx);
  std::uint64_t i = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c, ++i) {
      m(r, c) = std * stream.normal(i);
    }
  }
  return m;
}

} // namespace

NoiseDraw draw_noise(const NoiseParams& params, const NoiseStreams& streams,
                     Eigen::Index w_rows, Eigen::Index w_cols, Eigen::Index in_rows,
                     Eigen::Index in_cols) {
  params.validate();
  if (w_rows <= 0 || w_cols <= 0 || in_rows <= 0 || in_cols <= 0) {
    throw ShapeError("draw_noise: shapes must be positive");
  }
  NoiseDraw d;
  d.provenance = streams.chip;
  d.eps = draw_block(streams.fab(), params.sigma_fab, w_rows, w_cols);
  d.eta = draw_block(streams.thermal(), params.sigma_thermal, w_rows, w_cols);
  if (params.laser_mode == LaserMode::Global) {
    const Matrix per_row = draw_block(streams.laser(), params.sigma_laser, in_rows, 1);
    d.zeta = per_row.replicate(1, in_cols);
  } else {
    d.zeta = draw_block(streams.laser(), params.sigma_laser, in_rows, in_cols);
  }
  return d;
}

MacVariance mac_variance(const Vector& x, const Vector& w, const NoiseParams& params) {
  if (x.size() != w.size()) {
    throw ShapeError("mac_variance: x and w lengths differ");
  }
  MacVariance out;
  const Vector xw = x.cwiseProduct(w);
  out.variance = xw.squaredNorm() * params.total_variance();
  const double y = xw.sum();
  if (y != 0.0) {
    out.relative_std = std::sqrt(out.variance) / std::abs(y);
  }
  return out;
}

} // namespace mrsim::noise
