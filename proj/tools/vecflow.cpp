// Command-line front end: dataset generation, training, refinement, evaluation.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "vecflow/checkpoint.hpp"
#include "vecflow/config.hpp"
#include "vecflow/dataset.hpp"
#include "vecflow/errors.hpp"
#include "vecflow/pipeline.hpp"
#include "vecflow/rng.hpp"

namespace fs = std::filesystem;
using namespace vecflow;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

struct Sampler {
  std::optional<std::size_t> steps;
  std::optional<double> cfg_scale;
  std::string noise_aug;
  std::optional<std::size_t> t_aug;

  void attach(CLI::App* app) {
    app->add_option("--steps", steps, "Euler steps");
    app->add_option("--cfg-scale", cfg_scale, "classifier-free guidance scale");
    app->add_option("--noise-aug", noise_aug, "noise augmentation of the coarse latent")->check(CLI::IsMember({"on", "off"}));
    app->add_option("--t-aug", t_aug, "noise augmentation step index");
  }
  SamplerFlags flags() const {
    SamplerFlags f;
    f.steps = steps;
    f.cfg_scale = cfg_scale;
    f.t_aug = t_aug;
    if (!noise_aug.empty()) f.noise_aug = noise_aug == "on";
    return f;
  }
};

RunConfig resolve(const Globals& g) {
  RunConfig c = g.config_path.empty() ? config_from_json(nlohmann::json::object()) : load_config(g.config_path);
  if (g.seed) c.seed = *g.seed;
  if (!g.out.empty()) c.paths.out_dir = g.out;
  return c;
}

void write_sidecar(const RunConfig& c, const std::string& command) {
  write_json(fs::path(c.paths.out_dir) / (command + ".config.json"), config_to_json(c));
}

fs::path vae_dir(const RunConfig& c) { return fs::path(c.paths.checkpoint_dir) / "vae"; }
fs::path flow_dir(const RunConfig& c) { return fs::path(c.paths.checkpoint_dir) / "flow"; }

int cmd_gen_data(const Globals& g) {
  const RunConfig c = resolve(g);
  const Dataset ds = generate_dataset(c.dataset);
  save_dataset(ds, c, c.paths.data_dir);
  write_sidecar(c, "gen-data");
  std::printf("wrote %zu entries to %s (mean duplicate fraction %.4f)\n", ds.entries.size(), c.paths.data_dir.c_str(),
              ds.mean_duplicate_fraction);
  return 0;
}

int cmd_verify_data(const Globals& g) {
  const RunConfig c = resolve(g);
  const Dataset ds = load_dataset(c.paths.data_dir);
  const auto issues = verify_dataset(ds, c.dataset);
  for (const auto& i : issues) std::printf("%s\n", i.c_str());
  std::printf("%zu entries checked, %zu issues\n", ds.entries.size(), issues.size());
  return issues.empty() ? 0 : 1;
}

int cmd_train_vae(const Globals& g, bool resume, std::size_t stop_after) {
  const RunConfig c = resolve(g);
  const Dataset ds = load_dataset(c.paths.data_dir);
  const auto shapes = vae_training_shapes(ds, c.vae);
  ShapeVae vae(c.vae.model, c.seed);
  VaeTrainOptions o;
  o.checkpoint = vae_dir(c) / "train_state.ckpt";
  o.resume = resume;
  o.stop_after = stop_after;
  fs::create_directories(vae_dir(c));
  const VaeTrainResult r = train_vae(vae, shapes, c.vae, c.seed, o);
  save_vae(vae_dir(c), vae, c.seed);
  write_curve_csv(fs::path(c.paths.out_dir) / "vae_loss.csv", r.curve);
  write_sidecar(c, "train-vae");
  double mae = 0.0;
  for (std::size_t i = 0; i < shapes.size(); ++i) mae += near_surface_mae(vae, shapes[i], 1024, 0.05, derive_seed(c.seed, {i}));
  std::printf("trained %zu steps in %.1f s; near-surface MAE over %zu training shapes: %.5f\n", r.steps_done, r.seconds,
              shapes.size(), mae / static_cast<double>(shapes.size()));
  return 0;
}

int cmd_train_flow(const Globals& g, const std::string& pairing) {
  RunConfig c = resolve(g);
  if (!pairing.empty()) c.flow.pairing = pairing;
  c.validate();
  const Dataset ds = load_dataset(c.paths.data_dir);
  const auto vae = load_vae(vae_dir(c));
  const auto train = ds.split("train");
  if (train.empty()) throw ConfigError("dataset: training split is empty");
  FlowBundle flow;
  flow.seed = c.seed;
  flow.hyper = c.flow.hyper;
  flow.stats = LatentStats::fit(raw_latents(*vae, train, c.flow.pairing, c.seed, c.flow.anchor_draws));
  flow.model = std::make_unique<VelocityModel>(c.flow.dit, c.seed);
  const auto pairs = encode_pairs(*vae, train, flow.stats, c.flow.pairing, c.seed, c.flow.anchor_draws);
  const FlowTrainResult r = train_flow(*flow.model, pairs, c.flow, c.seed);
  save_flow(flow_dir(c), flow);
  write_curve_csv(fs::path(c.paths.out_dir) / "flow_loss.csv", r.curve);
  write_sidecar(c, "train-flow");
  std::printf("flow loss %.6f -> %.6f in %.1f s\n", r.initial_loss, r.final_loss, r.seconds);
  return 0;
}

PointCloud read_xyz(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  PointCloud c;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream s(line);
    s.imbue(std::locale::classic());
    Vec3 p;
    if (s >> p.x >> p.y >> p.z) c.points.push_back(p);
  }
  return c;
}

std::vector<double> parse_cond(const std::string& text) {
  std::vector<double> out;
  std::istringstream s(text);
  s.imbue(std::locale::classic());
  std::string item;
  while (std::getline(s, item, ',')) out.push_back(std::stod(item));
  return out;
}

int cmd_refine(const Globals& g, const Sampler& sampler, const std::string& input, const std::string& cond_text,
               const std::string& cond_spec, const std::string& truth, const std::string& output, bool vae_only,
               const std::string& trajectory) {
  const RunConfig c = resolve(g);
  const auto vae = load_vae(vae_dir(c));
  const std::size_t M = c.dataset.latent_len;
  const std::size_t N = c.dataset.surface_points;
  const fs::path in(input);
  CoarseInput coarse;
  const std::string ext = in.extension().string();
  if (ext == ".json") {
    coarse = coarse_from_spec(read_json(in).get<ShapeSpec>(), N, derive_seed(c.seed, {0xc0a}));
  } else if (ext == ".obj") {
    coarse = coarse_from_mesh(read_obj(in), N, M, derive_seed(c.seed, {0xc0b}));
  } else {
    coarse = coarse_from_cloud(read_xyz(in));
  }

  std::vector<double> cond(c.cond_dim(), 0.0);
  if (!cond_text.empty()) cond = parse_cond(cond_text);
  if (!cond_spec.empty()) cond = condition_vector(read_json(cond_spec).get<ShapeSpec>(), c.dataset.cond_slots);

  FlowBundle flow;
  RefineSettings rs;
  rs.mode = vae_only ? RefineMode::VaeRoundTrip : RefineMode::Flow;
  rs.seed = c.seed;
  rs.keep_trajectory = !trajectory.empty();
  if (!vae_only) {
    flow = load_flow(flow_dir(c));
    rs.hyper = apply_flags(flow.hyper, sampler.flags());
    rs.use_noise_aug = sampler.flags().noise_aug.value_or(true);
  }
  const RefineResult r = refine(*vae, vae_only ? nullptr : &flow, coarse, cond, c.eval, M, rs);

  TriMesh out_mesh = r.mesh;
  for (auto& v : out_mesh.vertices) v = coarse.frame.invert(v);
  const fs::path out_path = output.empty() ? fs::path(c.paths.out_dir) / "refined.obj" : fs::path(output);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  export_obj(out_mesh, out_path);
  if (!trajectory.empty()) write_json(trajectory, trajectory_to_json(r.trajectory));
  write_sidecar(c, "refine");
  std::printf("wrote %s (%zu vertices, %zu triangles)\n", out_path.string().c_str(), out_mesh.vertices.size(),
              out_mesh.triangles.size());

  if (!truth.empty()) {
    const FramedShape fine{read_json(truth).get<ShapeSpec>(), coarse.frame};
    const std::uint64_t s = derive_seed(c.seed, {0x7e5});
    const PointCloud fine_pts = sample_mesh_surface(analytic_mesh(fine, c.eval), c.eval.metric_points, s);
    const PointCloud coarse_pts = sample_mesh_surface(decode_mesh(*vae, r.z0, c.eval), c.eval.metric_points, s);
    const PointCloud refined_pts = sample_mesh_surface(r.mesh, c.eval.metric_points, s);
    EvalReport rep;
    EvalRow row;
    row.chamfer_coarse = chamfer_distance(coarse_pts, fine_pts);
    row.chamfer_refined = chamfer_distance(refined_pts, fine_pts);
    row.improvement = (row.chamfer_coarse - row.chamfer_refined) / row.chamfer_coarse;
    const SdfSamples band =
        draw_sdf_samples({coarse.cloud, QuerySet{}, fine}, c.eval.mae_points, 0.0, 0.02, 0.05, 0.5, derive_seed(s, {1}));
    const auto pred = vae.get()->decode(r.z1, band.points);
    for (std::size_t i = 0; i < pred.size(); ++i) row.sdf_mae += std::abs(pred[i] - band.values[i]) / pred.size();
    rep.rows.push_back(row);
    write_eval_csv(fs::path(c.paths.out_dir) / "refine_metrics.csv", rep);
    std::printf("chamfer coarse %.6f refined %.6f\n", row.chamfer_coarse, row.chamfer_refined);
  }
  return 0;
}

int cmd_eval(const Globals& g, const Sampler& sampler, const std::string& refiner, const std::string& split) {
  const RunConfig c = resolve(g);
  const Dataset ds = load_dataset(c.paths.data_dir);
  const auto vae = load_vae(vae_dir(c));
  const auto entries = ds.split(split);
  EvalSettings es;
  es.seed = c.seed;
  FlowBundle flow;
  if (refiner == "flow") {
    flow = load_flow(flow_dir(c));
    es.hyper = apply_flags(flow.hyper, sampler.flags());
    es.use_noise_aug = sampler.flags().noise_aug.value_or(true);
    es.refiner = EvalRefiner::Flow;
  } else {
    es.refiner = refiner == "vae" ? EvalRefiner::VaeRoundTrip : EvalRefiner::None;
  }
  const EvalReport rep = evaluate(*vae, refiner == "flow" ? &flow : nullptr, entries, c.eval, c.dataset.latent_len, es);
  write_eval_csv(fs::path(c.paths.out_dir) / "metrics.csv", rep);
  std::ofstream(fs::path(c.paths.out_dir) / "summary.txt") << rep.summary();
  write_sidecar(c, "eval");
  std::printf("%s", rep.summary().c_str());
  return 0;
}

int cmd_vae_recon(const Globals& g, const std::string& split) {
  const RunConfig c = resolve(g);
  const Dataset ds = load_dataset(c.paths.data_dir);
  const auto vae = load_vae(vae_dir(c));
  const fs::path path = fs::path(c.paths.out_dir) / "vae_recon.csv";
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "shape_id,kind,mae\n";
  double total = 0.0;
  std::size_t n = 0;
  for (const auto* e : ds.split(split)) {
    const VaeShape fine{e->fine_cloud, e->matching.fine_queries, e->fine_shape()};
    const VaeShape coarse{e->coarse_cloud, e->matching.coarse_queries, e->coarse_shape()};
    for (const auto& [kind, shape] : {std::pair{"fine", &fine}, std::pair{"coarse", &coarse}}) {
      const double mae = near_surface_mae(*vae, *shape, 2048, 0.05, derive_seed(c.seed, {e->id}));
      char buf[96];
      std::snprintf(buf, sizeof buf, "%zu,%s,%.9g\n", e->id, kind, mae);
      out << buf;
      total += mae;
      ++n;
    }
  }
  std::printf("mean near-surface MAE over %zu shapes: %.6f\n", n, n ? total / n : 0.0);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Coarse-to-fine shape refinement with latent rectified flow"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "run configuration (JSON)");
  app.add_option("--seed", g.seed, "global seed");
  app.add_option("--out", g.out, "output directory");

  app.add_subcommand("gen-data", "generate coarse/fine pairs");
  app.add_subcommand("verify-data", "check dataset invariants");

  auto* tv = app.add_subcommand("train-vae", "train the shape autoencoder");
  bool resume = false;
  std::size_t stop_after = 0;
  tv->add_flag("--resume", resume, "continue from the last training checkpoint");
  tv->add_option("--stop-after", stop_after, "stop after this many total steps");

  auto* tf = app.add_subcommand("train-flow", "train the velocity model");
  std::string pairing;
  tf->add_option("--pairing", pairing, "anchor pairing")->check(CLI::IsMember({"matched", "random"}));

  auto* rf = app.add_subcommand("refine", "refine one coarse shape");
  Sampler rs;
  rs.attach(rf);
  std::string input, cond_text, cond_spec, truth, output, trajectory;
  bool vae_only = false;
  rf->add_option("--input", input, "coarse shape: spec .json, mesh .obj or point list .xyz")->required();
  rf->add_option("--cond", cond_text, "comma-separated condition vector");
  rf->add_option("--cond-spec", cond_spec, "derive the condition from a fine spec .json");
  rf->add_option("--truth", truth, "fine spec .json for metrics");
  rf->add_option("--output", output, "OBJ path");
  rf->add_option("--trajectory", trajectory, "write per-step latent norms as JSON");
  rf->add_flag("--vae-only", vae_only, "skip the flow (autoencoder round trip)");

  auto* ev = app.add_subcommand("eval", "evaluate on a dataset split");
  Sampler es;
  es.attach(ev);
  std::string refiner = "flow", split = "test";
  ev->add_option("--refiner", refiner, "flow, vae or none")->check(CLI::IsMember({"flow", "vae", "none"}));
  ev->add_option("--split", split, "train or test");

  auto* vr = app.add_subcommand("vae-recon", "per-shape autoencoder reconstruction error");
  std::string recon_split = "train";
  vr->add_option("--split", recon_split, "train or test");

  CLI11_PARSE(app, argc, argv);
  try {
    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "gen-data") return cmd_gen_data(g);
    if (name == "verify-data") return cmd_verify_data(g);
    if (name == "train-vae") return cmd_train_vae(g, resume, stop_after);
    if (name == "train-flow") return cmd_train_flow(g, pairing);
    if (name == "refine") return cmd_refine(g, rs, input, cond_text, cond_spec, truth, output, vae_only, trajectory);
    if (name == "eval") return cmd_eval(g, es, refiner, split);
    if (name == "vae-recon") return cmd_vae_recon(g, recon_split);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
