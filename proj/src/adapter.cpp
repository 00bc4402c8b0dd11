#include "redistill/adapter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

#include "json.hpp"
#include "redistill/rng.hpp"

namespace redistill {
namespace {

struct TrainItem {
  Eigen::VectorXd image;
  CameraPose pose;
  ViewSector sector;
  const Eigen::VectorXd* caption;
};

struct HoldoutDraw {
  std::size_t item;
  double t;
  Eigen::VectorXd epsilon;
};

Eigen::VectorXd concat_condition(const Eigen::VectorXd& prefix,
                                 const Eigen::VectorXd& prompt) {
  Eigen::VectorXd cond(kConditionDim);
  cond.head(kEmbeddingDim) = prefix;
  cond.tail(kEmbeddingDim) = prompt;
  return cond;
}

std::vector<double> eigen_to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.begin(), v.end());
}

Eigen::VectorXd std_to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size());
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(m.cols());
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[c] = m(r, c);
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& rows) {
  const Eigen::Index nr = rows.size();
  const Eigen::Index nc = nr ? rows[0].size() : 0;
  Eigen::MatrixXd m(nr, nc);
  for (Eigen::Index r = 0; r < nr; ++r)
    for (Eigen::Index c = 0; c < nc; ++c) m(r, c) = rows[r][c].get<double>();
  return m;
}

}  // namespace

ViewSector pose_sector(const CameraPose& pose) {
  constexpr double pi = std::numbers::pi;
  const double az = normalize_azimuth(pose.azimuth);
  const double dist_front = std::min(az, 2.0 * pi - az);
  if (dist_front < pi / 4.0) return ViewSector::front;
  if (std::abs(az - pi) < pi / 4.0) return ViewSector::back;
  return ViewSector::side;
}

std::string sector_name(ViewSector sector) {
  switch (sector) {
    case ViewSector::front: return "front";
    case ViewSector::back: return "back";
    default: return "side";
  }
}

const Eigen::VectorXd& ViewPrefixTokens::for_sector(ViewSector sector) const {
  switch (sector) {
    case ViewSector::front: return front;
    case ViewSector::back: return back;
    default: return side;
  }
}

Eigen::VectorXd& ViewPrefixTokens::for_sector(ViewSector sector) {
  switch (sector) {
    case ViewSector::front: return front;
    case ViewSector::back: return back;
    default: return side;
  }
}

ViewPrefixTokens init_prefixes() {
  return {embed_text({"front", "view"}), embed_text({"side", "view"}),
          embed_text({"back", "view"})};
}

int AdapterParams::t_bucket(double t) const {
  return std::min(t_buckets - 1, static_cast<int>(t * t_buckets));
}

bool AdapterParams::is_identity() const {
  return factor_a.isZero(0.0) && cond_proj.isZero(0.0);
}

AdapterParams make_adapter(Eigen::Index dim, int rank, std::uint64_t seed) {
  if (rank < 1) throw std::invalid_argument("adapter: rank must be >= 1");
  AdapterParams p;
  p.rank = rank;
  p.factor_a = Eigen::MatrixXd::Zero(dim, rank);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.02);
  p.factor_b = Eigen::MatrixXd::NullaryExpr(
      dim, rank, [&](Eigen::Index, Eigen::Index) { return normal(rng); });
  p.cond_proj = Eigen::MatrixXd::Zero(dim, kConditionDim);
  p.t_gains = Eigen::VectorXd::Ones(p.t_buckets);
  return p;
}

AdapterParams zero_adapter(Eigen::Index dim, int rank) {
  AdapterParams p = make_adapter(dim, rank, 0);
  p.factor_b.setZero();
  return p;
}

Eigen::VectorXd adapted_epsilon(const AdapterParams& adapter,
                                const ViewPrefixTokens& prefixes,
                                const Eigen::VectorXd& x_t, double t,
                                ViewSector pose_prefix,
                                const Eigen::VectorXd& prompt_embedding,
                                const GaussianMixtureTarget& target) {
  if (x_t.size() != adapter.factor_a.rows())
    throw std::invalid_argument("adapted_epsilon: dimension mismatch");
  const Eigen::VectorXd cond =
      concat_condition(prefixes.for_sector(pose_prefix), prompt_embedding);
  const double gain = adapter.t_gains(adapter.t_bucket(t));
  return oracle_epsilon(x_t, t, target) +
         gain * (adapter.factor_a * (adapter.factor_b.transpose() * x_t) +
                 adapter.cond_proj * cond);
}

Eigen::VectorXd ddim_sample_adapted(const AdapterParams& adapter,
                                    const ViewPrefixTokens& prefixes,
                                    ViewSector pose_prefix,
                                    const Eigen::VectorXd& prompt_embedding,
                                    const GaussianMixtureTarget& target, int steps,
                                    const Eigen::VectorXd& x_T,
                                    const NoiseSchedule& schedule) {
  if (steps < 1)
    throw std::invalid_argument("ddim_sample_adapted: steps must be >= 1");
  schedule.validate();
  target.validate();

  auto eps_at = [&](const Eigen::VectorXd& x, double t) {
    return adapted_epsilon(adapter, prefixes, x, t, pose_prefix,
                           prompt_embedding, target);
  };
  Eigen::VectorXd x = x_T;
  double t_cur = schedule.t_max;
  for (int i = 1; i <= steps; ++i) {
    const double t_next =
        schedule.t_max + (schedule.t_min - schedule.t_max) * i / steps;
    const auto [a_cur, s_cur] = schedule_coeffs(t_cur);
    const auto [a_next, s_next] = schedule_coeffs(t_next);
    const Eigen::VectorXd eps = eps_at(x, t_cur);
    const Eigen::VectorXd x0 = (x - s_cur * eps) / a_cur;
    x = a_next * x0 + s_next * eps;
    t_cur = t_next;
  }
  const auto [a_end, s_end] = schedule_coeffs(t_cur);
  return (x - s_end * eps_at(x, t_cur)) / a_end;
}

AdaptGradients adapt_loss_gradients(const AdapterParams& params,
                                    const ViewPrefixTokens& prefixes,
                                    const Eigen::VectorXd& image, double t,
                                    const Eigen::VectorXd& epsilon,
                                    ViewSector sector,
                                    const Eigen::VectorXd& caption_embedding,
                                    const GaussianMixtureTarget& target) {
  const Eigen::Index dim = image.size();
  const Eigen::VectorXd x_t = perturb(image, t, epsilon).x_t;
  const Eigen::VectorXd cond =
      concat_condition(prefixes.for_sector(sector), caption_embedding);
  const int tb = params.t_bucket(t);
  const double gain = params.t_gains(tb);
  const Eigen::VectorXd correction =
      params.factor_a * (params.factor_b.transpose() * x_t) +
      params.cond_proj * cond;
  const Eigen::VectorXd residual =
      oracle_epsilon(x_t, t, target) + gain * correction - epsilon;
  const double scale = 2.0 / static_cast<double>(dim);

  AdaptGradients g;
  g.loss = residual.squaredNorm() / static_cast<double>(dim);
  g.t_bucket = tb;
  g.grad_a = scale * gain * residual * (params.factor_b.transpose() * x_t).transpose();
  g.grad_b = scale * gain * x_t * (params.factor_a.transpose() * residual).transpose();
  g.grad_w = scale * gain * residual * cond.transpose();
  g.grad_gain = scale * residual.dot(correction);
  g.grad_prefix =
      scale * gain * (params.cond_proj.leftCols(kEmbeddingDim).transpose() * residual);
  return g;
}

void AdaptConfig::validate() const {
  if (steps < 0) throw std::invalid_argument("adapt: steps must be >= 0");
  if (!(holdout_fraction >= 0.0 && holdout_fraction <= 0.5))
    throw std::invalid_argument("adapt: holdout_fraction must be in [0, 0.5]");
  if (pose_grid < 4) throw std::invalid_argument("adapt: pose_grid must be >= 4");
  if (early_stop_patience < 1)
    throw std::invalid_argument("adapt: early_stop_patience must be >= 1");
}

AdaptResult adapt(const std::vector<AdaptAsset>& assets,
                  const TargetProvider& oracle_target, const AdaptConfig& cfg,
                  const RenderConfig& render_cfg, const NoiseSchedule& schedule) {
  cfg.validate();
  schedule.validate();
  if (assets.empty()) throw std::invalid_argument("adapt: nonempty assets required");

  const Eigen::Index dim =
      static_cast<Eigen::Index>(render_cfg.resolution) * render_cfg.resolution;

  std::vector<TrainItem> items;
  for (const auto& asset : assets) {
    for (const auto& pose : uniform_pose_grid(cfg.pose_grid)) {
      items.push_back({flatten_image(render(asset.scene, pose, render_cfg).pixels),
                       pose, pose_sector(pose), &asset.caption_embedding});
    }
  }

  std::mt19937_64 rng = make_stream(cfg.seed, "adapt");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> t_draw(schedule.t_min, schedule.t_max);

  // Split renders into train/holdout, then freeze the holdout (t, eps) draws
  // so that the early-stop criterion is deterministic.
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_holdout =
      std::min(items.size() - 1,
               static_cast<std::size_t>(cfg.holdout_fraction * items.size()));
  std::vector<std::size_t> holdout(order.begin(), order.begin() + n_holdout);
  std::vector<std::size_t> train(order.begin() + n_holdout, order.end());

  constexpr int kDrawsPerHoldout = 8;
  std::vector<HoldoutDraw> holdout_draws;
  for (std::size_t idx : holdout) {
    for (int d = 0; d < kDrawsPerHoldout; ++d) {
      Eigen::VectorXd eps(dim);
      for (Eigen::Index i = 0; i < dim; ++i) eps(i) = normal(rng);
      holdout_draws.push_back({idx, t_draw(rng), std::move(eps)});
    }
  }

  AdaptResult result;
  result.params = make_adapter(dim, cfg.rank, derive_seed(cfg.seed, "adapt-init"));
  result.prefixes = init_prefixes();

  auto holdout_loss = [&]() {
    if (holdout_draws.empty()) return 0.0;
    double total = 0.0;
    for (const auto& draw : holdout_draws) {
      const TrainItem& item = items[draw.item];
      const Eigen::VectorXd x_t = perturb(item.image, draw.t, draw.epsilon).x_t;
      const Eigen::VectorXd pred =
          adapted_epsilon(result.params, result.prefixes, x_t, draw.t,
                          item.sector, *item.caption, oracle_target(item.pose));
      total += (pred - draw.epsilon).squaredNorm() / static_cast<double>(dim);
    }
    return total / static_cast<double>(holdout_draws.size());
  };

  AdapterParams best_params = result.params;
  ViewPrefixTokens best_prefixes = result.prefixes;
  double best_loss = holdout_loss();
  int best_step = 0;
  result.holdout_curve.push_back(best_loss);

  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
  const double lr = cfg.learning_rate;
  int since_improved = 0;
  int step = 0;
  for (; step < cfg.steps; ++step) {
    const TrainItem& item = items[train[pick(rng)]];
    const double t = t_draw(rng);
    Eigen::VectorXd eps(dim);
    for (Eigen::Index i = 0; i < dim; ++i) eps(i) = normal(rng);

    AdapterParams& p = result.params;
    const AdaptGradients g =
        adapt_loss_gradients(p, result.prefixes, item.image, t, eps, item.sector,
                             *item.caption, oracle_target(item.pose));
    result.train_curve.push_back(g.loss);

    p.factor_a -= lr * g.grad_a;
    p.factor_b -= lr * g.grad_b;
    p.cond_proj -= lr * g.grad_w;
    p.t_gains(g.t_bucket) -= lr * g.grad_gain;
    if (cfg.learn_prefixes)
      result.prefixes.for_sector(item.sector) -= lr * g.grad_prefix;

    if (!p.factor_a.allFinite() || !p.cond_proj.allFinite())
      throw std::runtime_error("adapt: non-finite parameters at step " +
                               std::to_string(step));

    if (!holdout_draws.empty()) {
      const double hl = holdout_loss();
      result.holdout_curve.push_back(hl);
      if (hl < best_loss - 1e-12) {
        best_loss = hl;
        best_params = p;
        best_prefixes = result.prefixes;
        best_step = step + 1;
        since_improved = 0;
      } else if (++since_improved >= cfg.early_stop_patience) {
        ++step;
        break;
      }
    }
  }

  if (!holdout_draws.empty() && cfg.steps > 0) {
    result.params = best_params;
    result.prefixes = best_prefixes;
    result.stopped_step = best_step;
  } else {
    result.stopped_step = step;
  }
  return result;
}

std::string adapter_to_json(const AdaptResult& result) {
  nlohmann::json j;
  j["rank"] = result.params.rank;
  j["A"] = matrix_to_json(result.params.factor_a);
  j["B"] = matrix_to_json(result.params.factor_b);
  j["W"] = matrix_to_json(result.params.cond_proj);
  j["t_gains"] = eigen_to_std(result.params.t_gains);
  j["prefixes"] = {{"front", eigen_to_std(result.prefixes.front)},
                   {"side", eigen_to_std(result.prefixes.side)},
                   {"back", eigen_to_std(result.prefixes.back)}};
  j["stopped_step"] = result.stopped_step;
  return j.dump();
}

AdaptResult adapter_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  AdaptResult result;
  result.params.rank = j.at("rank").get<int>();
  result.params.factor_a = matrix_from_json(j.at("A"));
  result.params.factor_b = matrix_from_json(j.at("B"));
  result.params.cond_proj = matrix_from_json(j.at("W"));
  result.params.t_gains = std_to_eigen(j.at("t_gains").get<std::vector<double>>());
  result.params.t_buckets = static_cast<int>(result.params.t_gains.size());
  result.prefixes.front =
      std_to_eigen(j.at("prefixes").at("front").get<std::vector<double>>());
  result.prefixes.side =
      std_to_eigen(j.at("prefixes").at("side").get<std::vector<double>>());
  result.prefixes.back =
      std_to_eigen(j.at("prefixes").at("back").get<std::vector<double>>());
  result.stopped_step = j.at("stopped_step").get<int>();
  return result;
}

}  // namespace redistill
