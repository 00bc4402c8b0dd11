#include "redistill/distill.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "redistill/rng.hpp"

namespace redistill {
namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

Eigen::VectorXd prior_epsilon(const PriorContext& ctx, const Eigen::VectorXd& x_t,
                              double t, const CameraPose& pose) {
  const GaussianMixtureTarget& target = ctx.target(pose);
  if (ctx.adapter != nullptr) {
    if (ctx.prefixes == nullptr || ctx.prompt_embedding == nullptr)
      throw std::invalid_argument("v_2d: adapter requires prefixes and prompt embedding");
    return adapted_epsilon(*ctx.adapter, *ctx.prefixes, x_t, t, pose_sector(pose),
                           *ctx.prompt_embedding, target);
  }
  return oracle_epsilon(x_t, t, target);
}

Eigen::VectorXd q_epsilon(const PriorContext& ctx, const Eigen::VectorXd& x_t,
                          double t, const CameraPose& pose,
                          const Eigen::VectorXd& epsilon_draw) {
  if (ctx.estimator != nullptr)
    return variational_epsilon(*ctx.estimator, x_t, t, pose, ctx.target(pose));
  return epsilon_draw;
}

void apply_update(Scene& scene, const SceneGrad& velocity, double lr) {
  for (std::size_t i = 0; i < scene.points.size(); ++i) {
    scene.points[i].position -= lr * velocity.positions[i];
    // Projected step: weights stay in the valid non-negative range.
    scene.points[i].weight = std::max(0.0, scene.points[i].weight - lr * velocity.weights[i]);
  }
}

bool scene_finite(const Scene& scene) {
  for (const auto& p : scene.points)
    if (!p.position.allFinite() || !std::isfinite(p.weight)) return false;
  return true;
}

}  // namespace

void WarmupConfig::validate() const {
  if (tau < 0) throw std::invalid_argument("warmup: tau must be >= 0");
  if (!(kernel_sigma2 > 0.0))
    throw std::invalid_argument("warmup: kernel_sigma2 must be > 0");
  if (pose_batch < 1) throw std::invalid_argument("warmup: pose_batch must be >= 1");
}

void DistillConfig::validate() const {
  if (particle_count < 1) throw std::invalid_argument("distill: K must be >= 1");
  if (particle_points < 1)
    throw std::invalid_argument("distill: particle_points must be >= 1");
  if (iterations < warmup.tau)
    throw std::invalid_argument("distill: iterations must be >= warmup tau");
  if (delta_denoise_period < 1)
    throw std::invalid_argument("distill: delta_denoise_period must be >= 1");
  warmup.validate();
  retrieval.validate();
  adapt.validate();
  render.validate();
  schedule.validate();
}

int default_warmup_tau(int iterations) {
  return std::max(1, iterations * 15 / 100);
}

ParticleSet init_particles(const DistillConfig& cfg) {
  if (cfg.particle_count < 1) throw std::invalid_argument("init_particles: K must be >= 1");
  std::mt19937_64 rng = make_stream(cfg.seed, "particles");
  std::uniform_real_distribution<double> pos(-1.0, 1.0);
  std::uniform_real_distribution<double> wgt(0.5, 1.0);

  ParticleSet set;
  set.seed = cfg.seed;
  for (int k = 0; k < cfg.particle_count; ++k) {
    Scene s;
    s.id = "particle-" + std::to_string(k);
    for (int i = 0; i < cfg.particle_points; ++i) {
      const double x = pos(rng), y = pos(rng), z = pos(rng);
      s.points.push_back({Eigen::Vector3d(x, y, z), wgt(rng)});
    }
    set.particles.push_back(std::move(s));
  }
  return set;
}

AssignmentMap assign_assets(const ParticleSet& particles,
                            const std::vector<Scene>& assets,
                            const std::vector<CameraPose>& poses,
                            const RenderConfig& cfg, AssignmentMode mode,
                            std::uint64_t seed) {
  if (assets.empty()) throw std::invalid_argument("assign_assets: nonempty assets required");
  AssignmentMap map;
  if (mode == AssignmentMode::random) {
    std::mt19937_64 rng = make_stream(seed, "assign");
    std::uniform_int_distribution<std::size_t> pick(0, assets.size() - 1);
    for (int i = 0; i < particles.count(); ++i) map.assignments.push_back(pick(rng));
    return map;
  }
  for (const auto& particle : particles.particles) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_idx = 0;
    for (std::size_t a = 0; a < assets.size(); ++a) {
      double dist = 0.0;
      for (const auto& pose : poses) {
        dist += (render(particle, pose, cfg).pixels - render(assets[a], pose, cfg).pixels)
                    .squaredNorm();
      }
      dist /= static_cast<double>(poses.size());
      if (dist < best) {  // strict: ties keep the lowest asset index
        best = dist;
        best_idx = a;
      }
    }
    map.assignments.push_back(best_idx);
  }
  return map;
}

SceneGrad v_asset(const Scene& particle, const Scene& assigned_asset,
                  const std::vector<CameraPose>& poses,
                  const WarmupConfig& warmup, int iteration,
                  const RenderConfig& cfg) {
  warmup.validate();
  if (iteration > warmup.tau) return SceneGrad::zero(particle.points.size());
  SceneGrad grad = view_l2_grad(particle, assigned_asset, poses, cfg).grad;
  grad *= 1.0 / warmup.kernel_sigma2;
  return grad;
}

Eigen::VectorXd kernel_velocity_exact(const Scene& particle,
                                      const std::vector<Scene>& all_assets,
                                      double kernel_sigma2) {
  if (all_assets.empty())
    throw std::invalid_argument("kernel_velocity_exact: nonempty assets required");
  if (!(kernel_sigma2 > 0.0))
    throw std::invalid_argument("kernel_velocity_exact: sigma^2 must be > 0");
  const Eigen::VectorXd theta = scene_parameters(particle);
  std::vector<Eigen::VectorXd> deltas;
  std::vector<double> log_k;
  for (const auto& asset : all_assets) {
    if (asset.points.size() != particle.points.size())
      throw std::invalid_argument(
          "kernel_velocity_exact: incommensurate point counts");
    Eigen::VectorXd d = theta - scene_parameters(asset);
    log_k.push_back(-d.squaredNorm() / (2.0 * kernel_sigma2));
    deltas.push_back(std::move(d));
  }
  const double max_lk = *std::max_element(log_k.begin(), log_k.end());
  double z = 0.0;
  for (double lk : log_k) z += std::exp(lk - max_lk);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(theta.size());
  for (std::size_t n = 0; n < deltas.size(); ++n)
    v += std::exp(log_k[n] - max_lk) / z * deltas[n] / kernel_sigma2;
  return v;
}

SceneGrad v_2d(const Scene& particle, const CameraPose& pose, double t,
               const Eigen::VectorXd& epsilon_draw, const PriorContext& ctx,
               double w_t, const RenderConfig& cfg) {
  const Eigen::VectorXd x = flatten_image(render(particle, pose, cfg).pixels);
  if (epsilon_draw.size() != x.size())
    throw std::invalid_argument("v_2d: epsilon dimension mismatch");
  const Eigen::VectorXd x_t = perturb(x, t, epsilon_draw).x_t;
  const Eigen::VectorXd diff =
      w_t * (prior_epsilon(ctx, x_t, t, pose) - q_epsilon(ctx, x_t, t, pose, epsilon_draw));
  return render_vjp(particle, pose, cfg, unflatten_image(diff, cfg.resolution));
}

SceneGrad delta_denoise_adjust(const SceneGrad& v2d_current,
                               const SceneGrad& v2d_at_asset, double weight) {
  if (v2d_current.positions.size() != v2d_at_asset.positions.size())
    throw std::invalid_argument("delta_denoise_adjust: shape mismatch");
  return v2d_current - weight * SceneGrad(v2d_at_asset);
}

SceneGrad asset_velocity_component(const Scene& particle, const CameraPose& pose,
                                   double t, const Eigen::VectorXd& epsilon_draw,
                                   const PriorContext& ctx_with_adapter,
                                   double w_t, const RenderConfig& cfg) {
  PriorContext unadapted = ctx_with_adapter;
  unadapted.adapter = nullptr;
  return v_2d(particle, pose, t, epsilon_draw, ctx_with_adapter, w_t, cfg) -
         v_2d(particle, pose, t, epsilon_draw, unadapted, w_t, cfg);
}

Eigen::Vector2d render_centroid(const Eigen::MatrixXd& pixels,
                                const RenderConfig& cfg) {
  const int p = cfg.resolution;
  const double cell = 2.0 * cfg.extent / p;
  double mass = 0.0;
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  for (int r = 0; r < p; ++r) {
    const double v = cfg.extent - (r + 0.5) * cell;
    for (int c = 0; c < p; ++c) {
      const double u = -cfg.extent + (c + 0.5) * cell;
      mass += pixels(r, c);
      centroid += pixels(r, c) * Eigen::Vector2d(u, v);
    }
  }
  if (mass < 1e-300) return Eigen::Vector2d::Zero();
  return centroid / mass;
}

std::string RunLog::to_csv() const {
  std::string out =
      "iter,particle,v2d_norm,vasset_norm,zeta_loss,warmup_flag,delta_applied\n";
  for (const auto& row : rows) {
    out += std::to_string(row.iter) + "," + std::to_string(row.particle) + "," +
           fmt_double(row.v2d_norm) + "," + fmt_double(row.vasset_norm) + "," +
           fmt_double(row.zeta_loss) + "," + std::to_string(row.warmup_flag) +
           "," + std::to_string(row.delta_applied) + "\n";
  }
  return out;
}

DistillOutput distill(const DistillConfig& cfg,
                      const std::vector<std::string>& prompt_tokens,
                      const EmbeddingIndex& db, const TargetBuilder& target_builder) {
  cfg.validate();

  DistillOutput out;
  const RetrievalResult retrieved = retrieve(prompt_tokens, db, cfg.retrieval);
  out.retrieved = retrieved.records;
  for (const auto& rec : out.retrieved) {
    out.aligned_assets.push_back(
        align_orientation(rec, rec.prefix_reference_embeddings, cfg.retrieval,
                          cfg.render)
            .aligned);
  }

  out.particles = init_particles(cfg);
  const std::vector<CameraPose> assign_poses = uniform_pose_grid(8);
  out.assignment = assign_assets(out.particles, out.aligned_assets, assign_poses,
                                 cfg.render, cfg.assignment_mode, cfg.seed);

  const Eigen::VectorXd prompt_embedding = embed_text(prompt_tokens);
  const TargetProvider target = target_builder(out.retrieved);

  const Eigen::Index dim =
      static_cast<Eigen::Index>(cfg.render.resolution) * cfg.render.resolution;
  if (cfg.use_adapter) {
    std::vector<AdaptAsset> adapt_assets;
    for (std::size_t a = 0; a < out.aligned_assets.size(); ++a)
      adapt_assets.push_back(
          {out.aligned_assets[a], embed_text(out.retrieved[a].caption_tokens)});
    AdaptConfig acfg = cfg.adapt;
    acfg.seed = derive_seed(cfg.seed, "adapt-stage");
    out.adaptation = adapt(adapt_assets, target, acfg, cfg.render, cfg.schedule);
  } else {
    out.adaptation.params = zero_adapter(dim, cfg.adapt.rank);
    out.adaptation.prefixes = init_prefixes();
  }

  out.estimator = make_estimator(dim, cfg.estimator_rank,
                                 derive_seed(cfg.seed, "estimator-init"),
                                 cfg.estimator_learning_rate);

  PriorContext ctx;
  ctx.target = target;
  ctx.prompt_embedding = &prompt_embedding;
  ctx.prefixes = &out.adaptation.prefixes;
  if (cfg.use_adapter) ctx.adapter = &out.adaptation.params;
  if (cfg.use_estimator) ctx.estimator = &out.estimator;

  std::mt19937_64 loop_rng = make_stream(cfg.seed, "loop");
  std::mt19937_64 zeta_rng = make_stream(cfg.seed, "zeta");
  std::uniform_real_distribution<double> t_draw(cfg.schedule.t_min, cfg.schedule.t_max);
  std::uniform_real_distribution<double> az_draw(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> normal(0.0, 1.0);

  const int tau = cfg.use_warmup ? cfg.warmup.tau : 0;
  WarmupConfig warmup = cfg.warmup;
  warmup.tau = tau;

  const int snapshot_stride = std::max(1, cfg.iterations / 200);
  const CameraPose front = make_pose(0.0);
  out.trajectories.resize(out.particles.count());
  auto snapshot = [&]() {
    for (int i = 0; i < out.particles.count(); ++i)
      out.trajectories[i].push_back(render_centroid(
          render(out.particles.particles[i], front, cfg.render).pixels,
          cfg.render));
  };
  snapshot();

  for (int s = 1; s <= cfg.iterations; ++s) {
    // Pre-generate this iteration's draws so parallel per-particle execution
    // could not perturb the seeded order.
    struct Draw {
      double t;
      CameraPose pose;
      Eigen::VectorXd eps;
      std::vector<CameraPose> warmup_poses;
    };
    std::vector<Draw> draws(out.particles.count());
    for (auto& d : draws) {
      d.t = t_draw(loop_rng);
      d.pose = make_pose(az_draw(loop_rng));
      d.eps.resize(dim);
      for (Eigen::Index i = 0; i < dim; ++i) d.eps(i) = normal(loop_rng);
      for (int b = 0; b < cfg.warmup.pose_batch; ++b)
        d.warmup_poses.push_back(make_pose(az_draw(loop_rng)));
    }

    const bool delta_iter =
        cfg.use_delta_denoise && (s % cfg.delta_denoise_period == 0);
    const int warm = (s <= tau) ? 1 : 0;

    std::vector<RunLogRow> iter_rows(out.particles.count());
    for (int i = 0; i < out.particles.count(); ++i) {
      Scene& particle = out.particles.particles[i];
      const Draw& d = draws[i];
      const double w_t = schedule_weight(cfg.schedule, d.t);

      SceneGrad velocity = v_2d(particle, d.pose, d.t, d.eps, ctx, w_t, cfg.render);
      int delta_applied = 0;
      if (delta_iter && !out.aligned_assets.empty()) {
        const Scene& asset = out.aligned_assets[out.assignment.assignments[i]];
        const SceneGrad at_asset = v_2d(asset, d.pose, d.t, d.eps, ctx, w_t, cfg.render);
        if (at_asset.positions.size() == velocity.positions.size()) {
          velocity = delta_denoise_adjust(velocity, at_asset, cfg.delta_denoise_weight);
          delta_applied = 1;
        } else {
          // Render-space delta: the asset may have a different point count,
          // so subtract its prior velocity mapped through this particle's
          // Jacobian instead.
          const Eigen::VectorXd xa =
              flatten_image(render(asset, d.pose, cfg.render).pixels);
          const Eigen::VectorXd xa_t = perturb(xa, d.t, d.eps).x_t;
          const Eigen::VectorXd diff =
              w_t * (prior_epsilon(ctx, xa_t, d.t, d.pose) -
                     q_epsilon(ctx, xa_t, d.t, d.pose, d.eps));
          const SceneGrad mapped = render_vjp(
              particle, d.pose, cfg.render,
              unflatten_image(diff, cfg.render.resolution));
          velocity = delta_denoise_adjust(velocity, mapped, cfg.delta_denoise_weight);
          delta_applied = 1;
        }
      }

      SceneGrad warm_velocity = SceneGrad::zero(particle.points.size());
      if (warm && !out.aligned_assets.empty()) {
        warm_velocity = v_asset(particle,
                                out.aligned_assets[out.assignment.assignments[i]],
                                d.warmup_poses, warmup, s, cfg.render);
      }

      iter_rows[i] = {s, i, velocity.norm(), warm_velocity.norm(), 0.0, warm,
                      delta_applied};
      apply_update(particle, velocity + warm_velocity, cfg.learning_rate);
      if (!scene_finite(particle))
        throw std::runtime_error("distill: non-finite particle at iteration " +
                                 std::to_string(s));
    }

    double zeta_loss = 0.0;
    if (cfg.use_estimator) {
      std::vector<PosedRender> renders;
      for (int i = 0; i < out.particles.count(); ++i) {
        const CameraPose pose = draws[i].pose;
        renders.push_back(
            {flatten_image(render(out.particles.particles[i], pose, cfg.render).pixels),
             pose});
      }
      zeta_loss = dsm_step_zeta(out.estimator, renders, target, cfg.schedule, zeta_rng);
    }
    for (auto& row : iter_rows) {
      row.zeta_loss = zeta_loss;
      out.log.rows.push_back(row);
    }
    if (s % snapshot_stride == 0 || s == cfg.iterations) snapshot();
  }
  return out;
}

}  // namespace redistill
