#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vecflow/config.hpp"
#include "vecflow/dataset.hpp"
#include "vecflow/flow.hpp"
#include "vecflow/meshing.hpp"
#include "vecflow/refiner.hpp"
#include "vecflow/shape2vec.hpp"

namespace vecflow {

using Logger = std::function<void(const std::string&)>;
void log_to_stderr(const std::string& line);

// Keeps freed activation buffers in the heap instead of returning them to the
// kernel after every step. Call once at program start.
void tune_allocator();

struct CurvePoint {
  std::size_t step = 0;
  double loss = 0.0;       // loss of the logged step
  double mean_loss = 0.0;  // mean over the logging interval
  double lr = 0.0;
};
void write_curve_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& curve);

// A surface cloud with its anchors and the ground-truth field in the same frame.
struct VaeShape {
  PointCloud surface;
  QuerySet anchors;
  FramedShape truth;
};

// Train-split fine shapes (fine anchors) and, if enabled, coarse shapes with
// their matched anchors.
std::vector<VaeShape> vae_training_shapes(const Dataset& dataset, const VaeTrainConfig& config);

// Near-surface (|f| < band, jittered surface points) and uniform volume
// samples with their true signed distances.
struct SdfSamples {
  PointCloud points;
  std::vector<double> values;
};
SdfSamples draw_sdf_samples(const VaeShape& shape, std::size_t count, double near_fraction, double sigma, double band,
                            double bound, std::uint64_t seed);

struct VaeTrainOptions {
  std::filesystem::path checkpoint;  // written at checkpoint_every and at the end; empty disables
  bool resume = false;               // continue from `checkpoint` if it exists
  std::size_t stop_after = 0;        // stop once this many total steps are done (0 = config steps)
  Logger log = log_to_stderr;
};

struct VaeTrainResult {
  std::vector<CurvePoint> curve;
  std::vector<double> losses;  // every step run in this call
  std::size_t first_step = 0;
  std::size_t steps_done = 0;
  double seconds = 0.0;
};

VaeTrainResult train_vae(ShapeVae& vae, const std::vector<VaeShape>& shapes, const VaeTrainConfig& config,
                         std::uint64_t seed, const VaeTrainOptions& options = {});

// Mean |decoded - true| over near-surface samples (deterministic encode).
double near_surface_mae(const ShapeVae& vae, const VaeShape& shape, std::size_t count, double band,
                        std::uint64_t seed);

void save_vae(const std::filesystem::path& dir, const ShapeVae& vae, std::uint64_t seed);
std::unique_ptr<ShapeVae> load_vae(const std::filesystem::path& dir);

// Per-channel affine map to roughly unit-variance latents for the flow model.
struct LatentStats {
  std::vector<double> shift;
  std::vector<double> scale;

  static LatentStats fit(const std::vector<Tensor>& latents);
  static LatentStats identity(std::size_t width);
  Tensor normalize(const Tensor& z) const;
  Tensor denormalize(const Tensor& z) const;
};

// Coarse anchors for a dataset entry: matched (token matching) or an
// independent random draw from the coarse cloud (ablation).
QuerySet coarse_anchors(const DatasetEntry& entry, const std::string& pairing, std::uint64_t seed);

// Fine and coarse anchors of one draw. Draw 0 is the stored matching; later
// draws redo the two-stage downsample of the fine cloud and match again.
std::pair<QuerySet, QuerySet> anchor_draw(const DatasetEntry& entry, const std::string& pairing, std::size_t draw,
                                          std::uint64_t seed);

// Deterministically encoded pairs of one split, in normalized latent space,
// `draws` anchor draws per entry.
std::vector<LatentPair> encode_pairs(const ShapeVae& vae, const std::vector<const DatasetEntry*>& entries,
                                     const LatentStats& stats, const std::string& pairing, std::uint64_t seed,
                                     std::size_t draws = 1);
// Coarse then fine raw latents, per entry and draw.
std::vector<Tensor> raw_latents(const ShapeVae& vae, const std::vector<const DatasetEntry*>& entries,
                                const std::string& pairing, std::uint64_t seed, std::size_t draws = 1);

struct FlowTrainOptions {
  Logger log = log_to_stderr;
  std::size_t eval_draws = 8;  // random draws per pair for the final loss
};

struct FlowTrainResult {
  std::vector<CurvePoint> curve;
  double initial_loss = 0.0;  // full-set loss of the fresh model
  double final_loss = 0.0;    // full-set loss after training
  double seconds = 0.0;
};

struct FlowBundle {
  std::unique_ptr<VelocityModel> model;
  LatentStats stats;
  FlowHyper hyper;
  std::uint64_t seed = 0;
};

FlowTrainResult train_flow(VelocityModel& model, const std::vector<LatentPair>& pairs, const FlowTrainConfig& config,
                           std::uint64_t seed, const FlowTrainOptions& options = {});

// Mean loss over all pairs and `draws` random (t, noise, dropout) draws.
double dataset_flow_loss(const VelocityModel& model, const std::vector<LatentPair>& pairs, const FlowHyper& hyper,
                         std::size_t draws, std::uint64_t seed);

void save_flow(const std::filesystem::path& dir, const FlowBundle& flow);
FlowBundle load_flow(const std::filesystem::path& dir);

// Coarse geometry accepted by refine, normalized to the unit box on ingestion.
struct CoarseInput {
  PointCloud cloud;  // normalized surface samples
  Transform frame;   // maps the input frame to the normalized one
};
CoarseInput coarse_from_spec(const ShapeSpec& spec, std::size_t n, std::uint64_t seed);
CoarseInput coarse_from_cloud(const PointCloud& cloud);
CoarseInput coarse_from_mesh(const TriMesh& mesh, std::size_t n, std::size_t latent_len, std::uint64_t seed);

struct SamplerFlags {
  std::optional<std::size_t> steps;
  std::optional<double> cfg_scale;
  std::optional<bool> noise_aug;
  std::optional<std::size_t> t_aug;
};
FlowHyper apply_flags(FlowHyper hyper, const SamplerFlags& flags);

enum class RefineMode { Flow, VaeRoundTrip };

struct RefineResult {
  Tensor z0;
  Tensor z1;
  TriMesh mesh;  // normalized frame
  std::vector<Tensor> trajectory;
};

struct RefineSettings {
  RefineMode mode = RefineMode::Flow;
  FlowHyper hyper;
  bool use_noise_aug = true;
  std::uint64_t seed = 0;
  bool keep_trajectory = false;
};

// Anchors by two-stage downsampling, deterministic encode, flow transport,
// grid decode and marching cubes.
RefineResult refine(const ShapeVae& vae, const FlowBundle* flow, const CoarseInput& coarse,
                    const std::vector<double>& cond, const EvalConfig& eval, std::size_t latent_len,
                    const RefineSettings& settings);

// Mesh of the zero level set of a decoded latent.
TriMesh decode_mesh(const ShapeVae& vae, const Tensor& tokens, const EvalConfig& eval);
TriMesh analytic_mesh(const FramedShape& shape, const EvalConfig& eval);

struct EvalRow {
  std::size_t shape_id = 0;
  double chamfer_coarse = 0.0;
  double chamfer_refined = 0.0;
  double sdf_mae = 0.0;
  double improvement = 0.0;  // (coarse - refined) / coarse
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double mean_chamfer_coarse = 0.0;
  double mean_chamfer_refined = 0.0;
  double mean_improvement = 0.0;
  double improved_fraction = 0.0;
  double mean_sdf_mae = 0.0;
  std::string summary() const;
};

enum class EvalRefiner { Flow, VaeRoundTrip, None };

struct EvalSettings {
  EvalRefiner refiner = EvalRefiner::Flow;
  FlowHyper hyper;
  bool use_noise_aug = true;
  std::uint64_t seed = 0;
  Logger log = log_to_stderr;
};

EvalReport evaluate(const ShapeVae& vae, const FlowBundle* flow, const std::vector<const DatasetEntry*>& entries,
                    const EvalConfig& eval, std::size_t latent_len, const EvalSettings& settings);
void write_eval_csv(const std::filesystem::path& path, const EvalReport& report);

}  // namespace vecflow
