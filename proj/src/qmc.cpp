#include "letf/qmc.hpp"

#include "letf/filters.hpp"
#include "letf/network_simplex.hpp"
#include "letf/random.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace letf {

namespace {

constexpr std::array<unsigned, 8> kPrimes = {2, 3, 5, 7, 11, 13, 17, 19};

Vector log_weights(const Matrix& pts, double y_obs, double obs_variance) {
  const Vector innov = (pts.colwise().sum().transpose().array() - y_obs).matrix();
  return -0.5 * innov.array().square() / obs_variance;
}

struct MomentErrors {
  double mean = 0.0;
  double var = 0.0;
  double cor = 0.0;
};

// Squared errors of one estimate; mean and variance errors averaged over the two components.
MomentErrors squared_errors(const PosteriorMoments& est, const PosteriorMoments& ref) {
  return {(est.mean - ref.mean).squaredNorm() / 2.0, (est.var - ref.var).squaredNorm() / 2.0,
          (est.cor - ref.cor) * (est.cor - ref.cor)};
}

void accumulate(MomentErrors& acc, const MomentErrors& e) {
  acc.mean += e.mean;
  acc.var += e.var;
  acc.cor += e.cor;
}

PosteriorMoments uniform_moments(const Matrix& pts) {
  return weighted_moments(pts, Vector::Constant(pts.cols(), 1.0 / static_cast<double>(pts.cols())));
}

}  // namespace

double radical_inverse(std::uint64_t index, unsigned base) {
  if (base < 2) throw InvalidArgumentError("radical_inverse: base must be at least 2");
  const double inv = 1.0 / static_cast<double>(base);
  double f = inv;
  double r = 0.0;
  while (index > 0) {
    r += f * static_cast<double>(index % base);
    index /= base;
    f *= inv;
  }
  return r;
}

Matrix halton_points(Index n, Index dims, std::uint64_t start) {
  if (n < 0) throw InvalidArgumentError("halton_points: negative count");
  if (dims < 1 || dims > static_cast<Index>(kPrimes.size()))
    throw InvalidArgumentError("halton_points: dims must be between 1 and 8");
  Matrix pts(dims, n);
  for (Index k = 0; k < n; ++k)
    for (Index d = 0; d < dims; ++d)
      pts(d, k) = radical_inverse(start + static_cast<std::uint64_t>(k), kPrimes[static_cast<std::size_t>(d)]);
  return pts;
}

double star_discrepancy_estimate(const Matrix& pts, Index grid) {
  if (grid < 1) throw InvalidArgumentError("star_discrepancy_estimate: grid must be positive");
  const Index dims = pts.rows();
  const Index n = pts.cols();
  if (n < 1 || dims < 1) throw InvalidArgumentError("star_discrepancy_estimate: no points");
  const double g = static_cast<double>(grid);

  // cell index of every coordinate, then a cumulative histogram over the grid
  Index cells = 1;
  for (Index d = 0; d < dims; ++d) cells *= grid;
  std::vector<double> open(static_cast<std::size_t>(cells), 0.0);
  std::vector<double> closed(static_cast<std::size_t>(cells), 0.0);
  // open[c] counts points strictly inside [0, u_c); closed[c] counts points in [0, u_c]
  // where u_c = (c_d + 1) / grid per axis.
  for (Index k = 0; k < n; ++k) {
    Index lo_open = 0, lo_closed = 0, stride = 1;
    bool inside_open = true, inside_closed = true;
    for (Index d = 0; d < dims; ++d) {
      const double x = pts(d, k);
      if (x < 0.0 || x > 1.0) throw InvalidArgumentError("star_discrepancy_estimate: points must lie in [0,1]");
      // smallest corner index with x < u (open) and x <= u (closed)
      Index co = static_cast<Index>(std::floor(x * g));
      Index cc = static_cast<Index>(std::ceil(x * g)) - 1;
      cc = std::max<Index>(cc, 0);
      if (co >= grid) inside_open = false;
      if (cc >= grid) inside_closed = false;
      lo_open += co * stride;
      lo_closed += cc * stride;
      stride *= grid;
    }
    if (inside_open) open[static_cast<std::size_t>(lo_open)] += 1.0;
    if (inside_closed) closed[static_cast<std::size_t>(lo_closed)] += 1.0;
  }
  // prefix sums along every axis turn the point histograms into box counts
  Index stride = 1;
  for (Index d = 0; d < dims; ++d) {
    for (Index c = 0; c < cells; ++c)
      if ((c / stride) % grid > 0) {
        open[static_cast<std::size_t>(c)] += open[static_cast<std::size_t>(c - stride)];
        closed[static_cast<std::size_t>(c)] += closed[static_cast<std::size_t>(c - stride)];
      }
    stride *= grid;
  }
  double worst = 0.0;
  for (Index c = 0; c < cells; ++c) {
    double vol = 1.0;
    Index rem = c;
    for (Index d = 0; d < dims; ++d) {
      vol *= static_cast<double>(rem % grid + 1) / g;
      rem /= grid;
    }
    const double nn = static_cast<double>(n);
    worst = std::max({worst, std::abs(open[static_cast<std::size_t>(c)] / nn - vol),
                      std::abs(closed[static_cast<std::size_t>(c)] / nn - vol)});
  }
  return worst;
}

PosteriorMoments weighted_moments(const Matrix& pts, const Vector& weights) {
  if (pts.rows() != 2) throw DimensionError("weighted_moments: expects two dimensional samples");
  if (weights.size() != pts.cols()) throw DimensionError("weighted_moments: weight length");
  const double total = weights.sum();
  if (!(total > 0.0)) throw WeightCollapseError("weighted_moments: weights sum to zero");
  PosteriorMoments out;
  out.mean = pts * weights / total;
  const Matrix dev = pts.colwise() - out.mean;
  const Vector v = dev.array().square().matrix() * weights / total;
  out.var = v;
  const double cov = (dev.row(0).array() * dev.row(1).array()).matrix().dot(weights) / total;
  out.cor = cov / std::sqrt(v[0] * v[1]);
  return out;
}

PosteriorMoments qmc_reference_moments(double y_obs, double obs_variance, Index n, std::uint64_t seed) {
  if (n < 1) throw InvalidArgumentError("qmc_reference_moments: need at least one point");
  if (!(obs_variance > 0.0)) throw InvalidArgumentError("qmc_reference_moments: variance must be positive");
  RngStream rng(seed, 7);
  const double shift0 = rng.uniform();
  const double shift1 = rng.uniform();
  // streamed sums so that the reference never materializes all points
  double s = 0.0, s0 = 0.0, s1 = 0.0, s00 = 0.0, s11 = 0.0, s01 = 0.0;
  for (Index k = 0; k < n; ++k) {
    double x0 = radical_inverse(static_cast<std::uint64_t>(k) + 1, 2) + shift0;
    double x1 = radical_inverse(static_cast<std::uint64_t>(k) + 1, 3) + shift1;
    if (x0 >= 1.0) x0 -= 1.0;
    if (x1 >= 1.0) x1 -= 1.0;
    const double d = x0 + x1 - y_obs;
    const double w = std::exp(-0.5 * d * d / obs_variance);
    s += w;
    s0 += w * x0;
    s1 += w * x1;
    s00 += w * x0 * x0;
    s11 += w * x1 * x1;
    s01 += w * x0 * x1;
  }
  PosteriorMoments out;
  out.mean << s0 / s, s1 / s;
  out.var << s00 / s - out.mean[0] * out.mean[0], s11 / s - out.mean[1] * out.mean[1];
  out.cor = (s01 / s - out.mean[0] * out.mean[1]) / std::sqrt(out.var[0] * out.var[1]);
  return out;
}

QmcResult qmc_single_step_experiment(const QmcConfig& cfg) {
  if (cfg.sizes.size() < 3) throw InvalidArgumentError("qmc experiment: need at least three ensemble sizes");
  if (cfg.repeats < 1 || cfg.shifts < 1) throw InvalidArgumentError("qmc experiment: shifts and repeats must be positive");
  QmcResult result;
  {
    RngStream truth(cfg.seed, 0);
    const double z0 = truth.uniform();
    const double z1 = truth.uniform();
    result.y_obs = z0 + z1 + std::sqrt(cfg.obs_variance) * truth.normal();
  }
  result.reference = qmc_reference_moments(result.y_obs, cfg.obs_variance, cfg.reference_size, cfg.seed);

  RngStream shift_rng(cfg.seed, 50);
  std::vector<Vector> shifts;
  for (Index r = 0; r < cfg.shifts; ++r) shifts.push_back(Vector{{shift_rng.uniform(), shift_rng.uniform()}});

  std::vector<std::pair<double, double>> etpf_pts, res_pts, sto_pts;
  for (std::size_t k = 0; k < cfg.sizes.size(); ++k) {
    const Index m = cfg.sizes[k];
    if (m < 2) throw InvalidArgumentError("qmc experiment: ensemble sizes must be at least 2");
    const double md = static_cast<double>(m);
    const Matrix base = halton_points(m, 2);
    QmcRow row;
    row.m = m;
    MomentErrors etpf_acc, res_acc, sto_acc;
    RngStream rng(cfg.seed, 100 + k);
    Matrix draw(2, m);
    std::vector<double> probs;

    for (const Vector& shift : shifts) {
      Matrix pts = base.colwise() + shift;
      pts = pts.unaryExpr([](double v) { return v >= 1.0 ? v - 1.0 : v; });
      const WeightVector w = weights_from_log_likelihood(log_weights(pts, result.y_obs, cfg.obs_variance));

      const auto t0 = std::chrono::steady_clock::now();
      const TransportSolution plan = solve_transport(
          w.values(), Vector::Constant(m, 1.0 / md),
          [&pts](Index i, Index j) { return (pts.col(i) - pts.col(j)).squaredNorm(); }, 2.0);
      row.lp_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

      Matrix analysis = Matrix::Zero(2, m);
      std::vector<std::vector<std::pair<Index, double>>> columns(static_cast<std::size_t>(m));
      for (const TransportEntry& e : plan.support) {
        analysis.col(e.col) += md * e.mass * pts.col(e.row);
        columns[static_cast<std::size_t>(e.col)].emplace_back(e.row, md * e.mass);
      }
      accumulate(etpf_acc, squared_errors(uniform_moments(analysis), result.reference));

      for (Index r = 0; r < cfg.repeats; ++r) {
        const std::vector<Index> picks = residual_resampling_indices(w, m, rng);
        for (Index j = 0; j < m; ++j) draw.col(j) = pts.col(picks[static_cast<std::size_t>(j)]);
        accumulate(res_acc, squared_errors(uniform_moments(draw), result.reference));

        if (cfg.stochastic_etpf) {
          for (Index j = 0; j < m; ++j) {
            const auto& col = columns[static_cast<std::size_t>(j)];
            probs.resize(col.size());
            for (std::size_t a = 0; a < col.size(); ++a) probs[a] = col[a].second;
            draw.col(j) = pts.col(col[static_cast<std::size_t>(rng.categorical(probs))].first);
          }
          accumulate(sto_acc, squared_errors(uniform_moments(draw), result.reference));
        }
      }
    }
    const double ns = static_cast<double>(cfg.shifts);
    const double nd = ns * static_cast<double>(cfg.repeats);
    row.etpf_mean_rmse = std::sqrt(etpf_acc.mean / ns);
    row.etpf_var_rmse = std::sqrt(etpf_acc.var / ns);
    row.etpf_cor_rmse = std::sqrt(etpf_acc.cor / ns);
    row.resampling_mean_rmse = std::sqrt(res_acc.mean / nd);
    row.resampling_var_rmse = std::sqrt(res_acc.var / nd);
    row.resampling_cor_rmse = std::sqrt(res_acc.cor / nd);
    row.stochastic_mean_rmse = std::sqrt(sto_acc.mean / nd);
    row.stochastic_var_rmse = std::sqrt(sto_acc.var / nd);
    row.stochastic_cor_rmse = std::sqrt(sto_acc.cor / nd);

    etpf_pts.emplace_back(md, row.etpf_mean_rmse);
    res_pts.emplace_back(md, row.resampling_mean_rmse);
    if (cfg.stochastic_etpf) sto_pts.emplace_back(md, row.stochastic_mean_rmse);
    result.rows.push_back(row);
  }
  result.etpf_mean_fit = fit_convergence(etpf_pts);
  result.resampling_mean_fit = fit_convergence(res_pts);
  if (cfg.stochastic_etpf) result.stochastic_mean_fit = fit_convergence(sto_pts);
  return result;
}

std::string qmc_table_csv(const QmcResult& result) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "m,etpf_mean,etpf_var,etpf_cor,resampling_mean,resampling_var,resampling_cor,"
        "stochastic_etpf_mean,stochastic_etpf_var,stochastic_etpf_cor\n";
  for (const QmcRow& r : result.rows)
    os << r.m << ',' << r.etpf_mean_rmse << ',' << r.etpf_var_rmse << ',' << r.etpf_cor_rmse << ','
       << r.resampling_mean_rmse << ',' << r.resampling_var_rmse << ',' << r.resampling_cor_rmse << ','
       << r.stochastic_mean_rmse << ',' << r.stochastic_var_rmse << ',' << r.stochastic_cor_rmse << '\n';
  os << "# y_obs " << result.y_obs << '\n';
  os << "# slope etpf_mean " << result.etpf_mean_fit.slope << " +- " << result.etpf_mean_fit.slope_stderr << '\n';
  os << "# slope resampling_mean " << result.resampling_mean_fit.slope << " +- "
     << result.resampling_mean_fit.slope_stderr << '\n';
  os << "# slope stochastic_etpf_mean " << result.stochastic_mean_fit.slope << " +- "
     << result.stochastic_mean_fit.slope_stderr << '\n';
  return os.str();
}

}  // namespace letf
