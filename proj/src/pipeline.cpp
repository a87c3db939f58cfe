#include "vecflow/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <malloc.h>
#include <sstream>

#include "vecflow/checkpoint.hpp"
#include "vecflow/errors.hpp"
#include "vecflow/rng.hpp"

namespace vecflow {

using nlohmann::json;

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c);
  return buf;
}

LrSchedule make_schedule(double lr, double warmup_fraction, double final_fraction, std::size_t steps) {
  LrSchedule s;
  s.peak_lr = lr;
  s.start_lr = lr * 0.01;
  s.warmup_steps = static_cast<std::uint64_t>(std::llround(warmup_fraction * static_cast<double>(steps)));
  s.total_steps = steps;
  s.final_frac = final_fraction;
  return s;
}

}  // namespace

void log_to_stderr(const std::string& line) { std::cerr << line << '\n'; }

void tune_allocator() {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
}

void write_curve_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& curve) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "step,loss,mean_loss,lr\n";
  char buf[160];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.6g\n", p.step, p.loss, p.mean_loss, p.lr);
    out << buf;
  }
}

std::vector<VaeShape> vae_training_shapes(const Dataset& dataset, const VaeTrainConfig& config) {
  std::vector<VaeShape> shapes;
  std::size_t used = 0;
  for (const auto* e : dataset.split("train")) {
    if (config.max_shapes && used == config.max_shapes) break;
    ++used;
    shapes.push_back({e->fine_cloud, e->matching.fine_queries, e->fine_shape()});
    if (config.include_coarse) shapes.push_back({e->coarse_cloud, e->matching.coarse_queries, e->coarse_shape()});
  }
  return shapes;
}

SdfSamples draw_sdf_samples(const VaeShape& shape, std::size_t count, double near_fraction, double sigma, double band,
                            double bound, std::uint64_t seed) {
  if (shape.surface.empty()) throw ContractError("draw_sdf_samples: empty surface");
  Rng rng(seed);
  SdfSamples s;
  s.points.points.reserve(count);
  s.values.reserve(count);
  const auto n_near = static_cast<std::size_t>(std::llround(near_fraction * static_cast<double>(count)));
  const auto last = static_cast<std::int64_t>(shape.surface.size()) - 1;
  for (std::size_t i = 0; i < n_near; ++i) {
    const Vec3 base = shape.surface.points[static_cast<std::size_t>(rng.integer(0, last))];
    Vec3 p = base;
    double v = shape.truth.sdf(p);
    for (int attempt = 0; attempt < 16; ++attempt) {
      const Vec3 q = base + Vec3{rng.normal(), rng.normal(), rng.normal()} * sigma;
      const double f = shape.truth.sdf(q);
      if (std::abs(f) < band) {
        p = q;
        v = f;
        break;
      }
    }
    s.points.points.push_back(p);
    s.values.push_back(v);
  }
  for (std::size_t i = n_near; i < count; ++i) {
    const Vec3 p{rng.uniform(-bound, bound), rng.uniform(-bound, bound), rng.uniform(-bound, bound)};
    s.points.points.push_back(p);
    s.values.push_back(shape.truth.sdf(p));
  }
  return s;
}

VaeTrainResult train_vae(ShapeVae& vae, const std::vector<VaeShape>& shapes, const VaeTrainConfig& config,
                         std::uint64_t seed, const VaeTrainOptions& options) {
  if (shapes.empty()) throw ContractError("train_vae: no training shapes");
  const auto t0 = std::chrono::steady_clock::now();
  auto params = vae.params().tensors();
  AdamState adam = AdamState::for_params(params, AdamHyper{config.lr});
  if (options.resume && !options.checkpoint.empty() && std::filesystem::exists(options.checkpoint)) {
    load_checkpoint(options.checkpoint, vae.params(), &adam);
    options.log("resumed VAE training at step " + std::to_string(adam.step));
  }
  const LrSchedule schedule = make_schedule(config.lr, config.warmup_fraction, config.final_lr_fraction, config.steps);
  const std::size_t end = options.stop_after ? std::min(options.stop_after, config.steps) : config.steps;

  VaeTrainResult result;
  result.first_step = adam.step;
  double interval_sum = 0.0;
  std::size_t interval_n = 0;
  const auto n_shapes = static_cast<std::int64_t>(shapes.size());
  for (std::size_t step = adam.step; step < end; ++step) {
    Rng rng(derive_seed(seed, {0x7a1, step}));
    vae.params().zero_grad();
    Tensor total;
    double loss_value = 0.0;
    try {
      for (std::size_t b = 0; b < config.batch_shapes; ++b) {
        const VaeShape& shape = shapes[static_cast<std::size_t>(rng.integer(0, n_shapes - 1))];
        const std::uint64_t s = derive_seed(seed, {0x7a2, step, b});
        const SdfSamples samples =
            draw_sdf_samples(shape, config.queries_per_shape, config.near_surface_fraction, config.near_surface_sigma,
                             config.near_surface_band, config.sample_bound, s);
        const auto m = vae.encode_moments(points_tensor(shape.surface), points_tensor(shape.anchors.query_points));
        const Tensor z = vae.reparameterize(m, s);
        const Tensor pred = vae.decode_tensor(z, points_tensor(samples.points));
        const Tensor truth = Tensor::from({samples.values.size(), 1}, samples.values);
        const Tensor l = vae_loss(pred, truth, m.mean, m.logvar, vae.config().beta_kl);
        total = total.defined() ? add(total, l) : l;
      }
      total = scale(total, 1.0 / static_cast<double>(config.batch_shapes));
      loss_value = total.item();
      backward(total);
    } catch (const NumericError& e) {
      throw NumericError("VAE training diverged at step " + std::to_string(step) + ": " + e.what());
    }
    if (config.grad_clip > 0) clip_grad_norm(params, config.grad_clip);
    adam.hyper.lr = schedule.at(step);
    adam_step(params, adam);

    result.losses.push_back(loss_value);
    interval_sum += loss_value;
    ++interval_n;
    const std::size_t done = step + 1;
    if (done % config.log_every == 0 || done == end) {
      const CurvePoint p{done, loss_value, interval_sum / static_cast<double>(interval_n), adam.hyper.lr};
      result.curve.push_back(p);
      options.log("vae step " + std::to_string(done) + "/" + std::to_string(config.steps) +
                  fmt(" loss %.6f mean %.6f lr %.2e", p.loss, p.mean_loss, p.lr));
      interval_sum = 0.0;
      interval_n = 0;
    }
    if (!options.checkpoint.empty() &&
        ((config.checkpoint_every && done % config.checkpoint_every == 0) || done == end)) {
      save_checkpoint(options.checkpoint, vae.params(), &adam);
    }
  }
  result.steps_done = adam.step;
  result.seconds = seconds_since(t0);
  return result;
}

double near_surface_mae(const ShapeVae& vae, const VaeShape& shape, std::size_t count, double band,
                        std::uint64_t seed) {
  const SdfSamples samples = draw_sdf_samples(shape, count, 1.0, 0.02, band, 0.55, seed);
  const LatentSet latent = vae.encode(shape.surface, shape.anchors, EncodeMode::Deterministic);
  const std::vector<double> pred = vae.decode(latent, samples.points);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred[i] - samples.values[i]);
  return acc / static_cast<double>(pred.size());
}

void save_vae(const std::filesystem::path& dir, const ShapeVae& vae, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  write_json(dir / "vae.json", {{"model", vae.config()}, {"seed", seed}});
  save_checkpoint(dir / "vae.ckpt", vae.params());
}

std::unique_ptr<ShapeVae> load_vae(const std::filesystem::path& dir) {
  const json meta = read_json(dir / "vae.json");
  auto vae = std::make_unique<ShapeVae>(meta.at("model").get<VaeConfig>(), meta.at("seed").get<std::uint64_t>());
  load_checkpoint(dir / "vae.ckpt", vae->params());
  return vae;
}

LatentStats LatentStats::fit(const std::vector<Tensor>& latents) {
  if (latents.empty()) throw ContractError("LatentStats::fit: no latents");
  const std::size_t d = latents.front().cols();
  std::vector<double> sum(d, 0.0), sq(d, 0.0);
  std::size_t rows = 0;
  for (const auto& z : latents) {
    if (z.cols() != d) throw ShapeError("LatentStats::fit: width mismatch");
    for (std::size_t r = 0; r < z.rows(); ++r)
      for (std::size_t c = 0; c < d; ++c) {
        const double v = z[r * d + c];
        sum[c] += v;
        sq[c] += v * v;
      }
    rows += z.rows();
  }
  LatentStats s;
  s.shift.resize(d);
  s.scale.resize(d);
  for (std::size_t c = 0; c < d; ++c) {
    const double mu = sum[c] / static_cast<double>(rows);
    const double var = std::max(0.0, sq[c] / static_cast<double>(rows) - mu * mu);
    s.shift[c] = mu;
    s.scale[c] = std::sqrt(var) + 1e-8;
  }
  return s;
}

LatentStats LatentStats::identity(std::size_t width) { return {std::vector<double>(width, 0.0), std::vector<double>(width, 1.0)}; }

Tensor LatentStats::normalize(const Tensor& z) const {
  const std::size_t d = shift.size();
  if (z.cols() != d) throw ShapeError("LatentStats::normalize: width mismatch");
  std::vector<double> out(z.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (z[i] - shift[i % d]) / scale[i % d];
  return Tensor::from(z.shape(), std::move(out));
}

Tensor LatentStats::denormalize(const Tensor& z) const {
  const std::size_t d = shift.size();
  if (z.cols() != d) throw ShapeError("LatentStats::denormalize: width mismatch");
  std::vector<double> out(z.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = z[i] * scale[i % d] + shift[i % d];
  return Tensor::from(z.shape(), std::move(out));
}

QuerySet coarse_anchors(const DatasetEntry& entry, const std::string& pairing, std::uint64_t seed) {
  if (pairing == "matched") return entry.matching.coarse_queries;
  if (pairing == "random") {
    return random_downsample(entry.coarse_cloud, entry.matching.map.size(), derive_seed(seed, {0x4a9, entry.id}));
  }
  throw ConfigError("flow.pairing: unknown pairing '" + pairing + "'");
}

std::pair<QuerySet, QuerySet> anchor_draw(const DatasetEntry& entry, const std::string& pairing, std::size_t draw,
                                          std::uint64_t seed) {
  if (draw == 0) return {entry.matching.fine_queries, coarse_anchors(entry, pairing, seed)};
  const std::size_t m = entry.matching.map.size();
  QuerySet fine = two_stage_downsample(entry.fine_cloud, m, derive_seed(seed, {0xa7c, entry.id, draw}));
  if (pairing == "matched") {
    QuerySet coarse = match_tokens(fine, entry.coarse_cloud).coarse_queries;
    return {std::move(fine), std::move(coarse)};
  }
  if (pairing == "random") {
    return {std::move(fine), random_downsample(entry.coarse_cloud, m, derive_seed(seed, {0x4a9, entry.id, draw}))};
  }
  throw ConfigError("flow.pairing: unknown pairing '" + pairing + "'");
}

std::vector<Tensor> raw_latents(const ShapeVae& vae, const std::vector<const DatasetEntry*>& entries,
                                const std::string& pairing, std::uint64_t seed, std::size_t draws) {
  std::vector<Tensor> out;
  for (const auto* e : entries) {
    for (std::size_t k = 0; k < draws; ++k) {
      const auto [fine, coarse] = anchor_draw(*e, pairing, k, seed);
      out.push_back(vae.encode(e->coarse_cloud, coarse, EncodeMode::Deterministic).tokens);
      out.push_back(vae.encode(e->fine_cloud, fine, EncodeMode::Deterministic).tokens);
    }
  }
  return out;
}

std::vector<LatentPair> encode_pairs(const ShapeVae& vae, const std::vector<const DatasetEntry*>& entries,
                                     const LatentStats& stats, const std::string& pairing, std::uint64_t seed,
                                     std::size_t draws) {
  const std::vector<Tensor> raw = raw_latents(vae, entries, pairing, seed, draws);
  std::vector<LatentPair> pairs;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    for (std::size_t k = 0; k < draws; ++k) {
      const std::size_t r = 2 * (i * draws + k);
      const std::uint64_t id = k == 0 ? entries[i]->id : derive_seed(entries[i]->id, {k});
      pairs.push_back({stats.normalize(raw[r]), stats.normalize(raw[r + 1]), entries[i]->cond, id});
    }
  }
  return pairs;
}

double dataset_flow_loss(const VelocityModel& model, const std::vector<LatentPair>& pairs, const FlowHyper& hyper,
                         std::size_t draws, std::uint64_t seed) {
  if (pairs.empty()) throw ContractError("dataset_flow_loss: no pairs");
  const NoiseSchedule schedule = NoiseSchedule::linear();
  double acc = 0.0;
  for (std::size_t d = 0; d < draws; ++d) {
    FlowStepOptions o;
    o.seed = derive_seed(seed, {0xe7a1});
    o.step = d;
    acc += evaluate_loss(pairs, model, hyper, schedule, o);
  }
  return acc / static_cast<double>(draws);
}

FlowTrainResult train_flow(VelocityModel& model, const std::vector<LatentPair>& pairs, const FlowTrainConfig& config,
                           std::uint64_t seed, const FlowTrainOptions& options) {
  if (pairs.empty()) throw ContractError("train_flow: no latent pairs");
  for (const auto& p : pairs) {
    if (p.z0.rows() != model.config().latent_len || p.z0.cols() != model.config().latent_width) {
      throw ConfigError("flow.dit: latent shape " + shape_str(p.z0.shape()) + " does not match the DiT config");
    }
  }
  const auto t0 = std::chrono::steady_clock::now();
  FlowHyper hyper = config.hyper;
  if (!config.noise_aug) hyper.t_aug_train = 0;
  const NoiseSchedule schedule = NoiseSchedule::linear();
  auto params = model.params().tensors();
  AdamState adam = AdamState::for_params(params, AdamHyper{config.lr});
  const LrSchedule lr = make_schedule(config.lr, config.warmup_fraction, config.final_lr_fraction, config.steps);

  FlowTrainResult result;
  result.initial_loss = dataset_flow_loss(model, pairs, hyper, options.eval_draws, seed);
  const std::size_t batch = std::min(config.batch, pairs.size());
  std::vector<std::size_t> order(pairs.size());
  double interval_sum = 0.0;
  std::size_t interval_n = 0;
  for (std::size_t step = 0; step < config.steps; ++step) {
    Rng rng(derive_seed(seed, {0xf10, step}));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<LatentPair> chosen;
    for (std::size_t i = 0; i < batch; ++i) {
      const auto j = static_cast<std::size_t>(rng.integer(static_cast<std::int64_t>(i), static_cast<std::int64_t>(order.size()) - 1));
      std::swap(order[i], order[j]);
      chosen.push_back(pairs[order[i]]);
    }
    FlowStepOptions o;
    o.step = step;
    o.seed = seed;
    o.lr = lr.at(step);
    o.grad_clip = config.grad_clip;
    double loss = 0.0;
    try {
      loss = train_step(chosen, model, adam, hyper, schedule, o);
    } catch (const NumericError& e) {
      throw NumericError("flow training diverged at step " + std::to_string(step) + ": " + e.what());
    }
    interval_sum += loss;
    ++interval_n;
    const std::size_t done = step + 1;
    if (done % config.log_every == 0 || done == config.steps) {
      const CurvePoint p{done, loss, interval_sum / static_cast<double>(interval_n), o.lr};
      result.curve.push_back(p);
      options.log("flow step " + std::to_string(done) + "/" + std::to_string(config.steps) +
                  fmt(" loss %.6f mean %.6f lr %.2e", p.loss, p.mean_loss, p.lr));
      interval_sum = 0.0;
      interval_n = 0;
    }
  }
  result.final_loss = dataset_flow_loss(model, pairs, hyper, options.eval_draws, seed);
  result.seconds = seconds_since(t0);
  return result;
}

void save_flow(const std::filesystem::path& dir, const FlowBundle& flow) {
  std::filesystem::create_directories(dir);
  write_json(dir / "flow.json", {{"dit", flow.model->config()},
                                 {"hyper", flow.hyper},
                                 {"seed", flow.seed},
                                 {"latent_stats", {{"shift", flow.stats.shift}, {"scale", flow.stats.scale}}}});
  save_checkpoint(dir / "flow.ckpt", flow.model->params());
}

FlowBundle load_flow(const std::filesystem::path& dir) {
  const json meta = read_json(dir / "flow.json");
  FlowBundle b;
  b.seed = meta.at("seed");
  b.model = std::make_unique<VelocityModel>(meta.at("dit").get<DiTConfig>(), b.seed);
  b.hyper = meta.at("hyper").get<FlowHyper>();
  b.stats.shift = meta.at("latent_stats").at("shift").get<std::vector<double>>();
  b.stats.scale = meta.at("latent_stats").at("scale").get<std::vector<double>>();
  load_checkpoint(dir / "flow.ckpt", b.model->params());
  return b;
}

CoarseInput coarse_from_spec(const ShapeSpec& spec, std::size_t n, std::uint64_t seed) {
  return coarse_from_cloud(sample_surface(spec, n, seed));
}

CoarseInput coarse_from_cloud(const PointCloud& cloud) {
  auto [normalized, frame] = normalize_to_unit_box(cloud);
  return {std::move(normalized), frame};
}

CoarseInput coarse_from_mesh(const TriMesh& mesh, std::size_t n, std::size_t latent_len, std::uint64_t seed) {
  double area = 0.0;
  std::size_t usable = 0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const double a = triangle_area(mesh, t);
    if (a > 1e-12) {
      area += a;
      ++usable;
    }
  }
  if (usable == 0 || n < 4 * latent_len) {
    throw ContractError("mesh input yields fewer than 4M=" + std::to_string(4 * latent_len) +
                        " usable surface samples; sample the mesh more densely");
  }
  return coarse_from_cloud(sample_mesh_surface(mesh, n, seed));
}

FlowHyper apply_flags(FlowHyper hyper, const SamplerFlags& flags) {
  if (flags.steps) hyper.num_steps = *flags.steps;
  if (flags.cfg_scale) hyper.cfg_scale = *flags.cfg_scale;
  if (flags.t_aug) hyper.t_aug_infer = *flags.t_aug;
  hyper.validate(1000);
  return hyper;
}

TriMesh decode_mesh(const ShapeVae& vae, const Tensor& tokens, const EvalConfig& eval) {
  const double b = eval.grid_bound;
  const BatchField field = [&vae, &tokens](const std::vector<Vec3>& pts) {
    PointCloud c;
    c.points = pts;
    return vae.decode(tokens, c);
  };
  const SdfGrid grid = build_sdf_grid(field, eval.grid_resolution, Aabb{{-b, -b, -b}, {b, b, b}}, eval.decode_batch);
  return marching_cubes(grid, 0.0);
}

TriMesh analytic_mesh(const FramedShape& shape, const EvalConfig& eval) {
  const double b = eval.grid_bound;
  const SdfGrid grid = build_sdf_grid([&shape](const Vec3& p) { return shape.sdf(p); }, eval.grid_resolution,
                                      Aabb{{-b, -b, -b}, {b, b, b}});
  return marching_cubes(grid, 0.0);
}

RefineResult refine(const ShapeVae& vae, const FlowBundle* flow, const CoarseInput& coarse,
                    const std::vector<double>& cond, const EvalConfig& eval, std::size_t latent_len,
                    const RefineSettings& settings) {
  if (coarse.cloud.size() < 4 * latent_len) {
    throw ContractError("coarse input has " + std::to_string(coarse.cloud.size()) + " surface samples; need at least 4M=" +
                        std::to_string(4 * latent_len));
  }
  RefineResult r;
  const QuerySet anchors = two_stage_downsample(coarse.cloud, latent_len, derive_seed(settings.seed, {0x2ef}));
  r.z0 = vae.encode(coarse.cloud, anchors, EncodeMode::Deterministic).tokens;
  if (settings.mode == RefineMode::Flow) {
    if (!flow || !flow->model) throw ContractError("refine: flow mode needs a flow checkpoint");
    if (flow->model->config().latent_len != latent_len || flow->model->config().latent_width != r.z0.cols()) {
      throw ConfigError("flow.dit: checkpoint does not match the VAE latent shape " + shape_str(r.z0.shape()));
    }
    const NoiseSchedule schedule = NoiseSchedule::linear();
    SampleOptions o;
    o.use_noise_aug = settings.use_noise_aug;
    o.seed = derive_seed(settings.seed, {0x5a3});
    o.trajectory = settings.keep_trajectory ? &r.trajectory : nullptr;
    const Tensor z1n =
        sample(flow->stats.normalize(r.z0), model_field(*flow->model, cond), settings.hyper, schedule, o);
    r.z1 = flow->stats.denormalize(z1n);
  } else {
    r.z1 = r.z0;
  }
  r.mesh = decode_mesh(vae, r.z1, eval);
  return r;
}

std::string EvalReport::summary() const {
  std::ostringstream s;
  char buf[200];
  std::snprintf(buf, sizeof buf, "shapes: %zu\n", rows.size());
  s << buf;
  std::snprintf(buf, sizeof buf, "mean chamfer coarse->fine:  %.6f\n", mean_chamfer_coarse);
  s << buf;
  std::snprintf(buf, sizeof buf, "mean chamfer refined->fine: %.6f\n", mean_chamfer_refined);
  s << buf;
  std::snprintf(buf, sizeof buf, "mean improvement: %.2f%%\n", 100.0 * mean_improvement);
  s << buf;
  std::snprintf(buf, sizeof buf, "improved shapes: %.1f%%\n", 100.0 * improved_fraction);
  s << buf;
  std::snprintf(buf, sizeof buf, "mean sdf mae: %.6f\n", mean_sdf_mae);
  s << buf;
  return s.str();
}

EvalReport evaluate(const ShapeVae& vae, const FlowBundle* flow, const std::vector<const DatasetEntry*>& entries,
                    const EvalConfig& eval, std::size_t latent_len, const EvalSettings& settings) {
  if (entries.empty()) throw ContractError("evaluate: empty split");
  EvalReport report;
  for (const auto* e : entries) {
    const std::uint64_t s = derive_seed(settings.seed, {0xe7, e->id});
    const FramedShape fine = e->fine_shape(), coarse = e->coarse_shape();
    const PointCloud fine_pts = sample_mesh_surface(analytic_mesh(fine, eval), eval.metric_points, derive_seed(s, {1}));
    const TriMesh coarse_mesh = analytic_mesh(coarse, eval);
    const std::uint64_t surface_seed = derive_seed(s, {2});
    const PointCloud coarse_pts = sample_mesh_surface(coarse_mesh, eval.metric_points, surface_seed);

    const SdfSamples band = draw_sdf_samples({e->fine_cloud, e->matching.fine_queries, fine}, eval.mae_points, 1.0,
                                             0.02, 0.05, 0.55, derive_seed(s, {3}));
    EvalRow row;
    row.shape_id = e->id;
    row.chamfer_coarse = chamfer_distance(coarse_pts, fine_pts);
    std::vector<double> pred;
    if (settings.refiner == EvalRefiner::None) {
      row.chamfer_refined = chamfer_distance(coarse_pts, fine_pts);
      for (const auto& p : band.points.points) pred.push_back(coarse.sdf(p));
    } else {
      RefineSettings rs;
      rs.mode = settings.refiner == EvalRefiner::Flow ? RefineMode::Flow : RefineMode::VaeRoundTrip;
      rs.hyper = settings.hyper;
      rs.use_noise_aug = settings.use_noise_aug;
      rs.seed = derive_seed(s, {4});
      const RefineResult r = refine(vae, flow, {e->coarse_cloud, Transform{}}, e->cond, eval, latent_len, rs);
      row.chamfer_refined = r.mesh.empty()
                                ? std::numeric_limits<double>::infinity()
                                : chamfer_distance(sample_mesh_surface(r.mesh, eval.metric_points, surface_seed), fine_pts);
      pred = vae.decode(r.z1, band.points);
    }
    double mae = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) mae += std::abs(pred[i] - band.values[i]);
    row.sdf_mae = mae / static_cast<double>(pred.size());
    row.improvement = (row.chamfer_coarse - row.chamfer_refined) / row.chamfer_coarse;
    settings.log("eval shape " + std::to_string(e->id) +
                 fmt(": chamfer coarse %.5f refined %.5f improvement %.2f%%", row.chamfer_coarse, row.chamfer_refined,
                     100.0 * row.improvement));
    report.rows.push_back(row);
  }
  const double n = static_cast<double>(report.rows.size());
  for (const auto& r : report.rows) {
    report.mean_chamfer_coarse += r.chamfer_coarse / n;
    report.mean_chamfer_refined += r.chamfer_refined / n;
    report.mean_improvement += r.improvement / n;
    report.mean_sdf_mae += r.sdf_mae / n;
    if (r.chamfer_refined < r.chamfer_coarse) report.improved_fraction += 1.0 / n;
  }
  return report;
}

void write_eval_csv(const std::filesystem::path& path, const EvalReport& report) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "shape_id,chamfer_coarse,chamfer_refined,sdf_mae,improvement\n";
  char buf[200];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g\n", r.shape_id, r.chamfer_coarse, r.chamfer_refined, r.sdf_mae,
                  r.improvement);
    out << buf;
  }
}

}  // namespace vecflow
