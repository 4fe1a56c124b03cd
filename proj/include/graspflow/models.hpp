#pragma once

#include "graspflow/bps.hpp"
#include "graspflow/flows.hpp"
#include "graspflow/grasp.hpp"
#include "graspflow/mlp.hpp"
#include "graspflow/optim.hpp"

#include <json.hpp>

#include <functional>
#include <string>
#include <vector>

namespace graspflow {

/// Architecture of the generative models. `feature_dim` is the length of the
/// per-observation feature (the BPS size for point clouds, anything for toy tasks).
struct ModelConfig {
  Index feature_dim = kDefaultBasisSize;
  Index grasp_dim = kGraspDim;
  Index latent_dim = 16;  // l; the observation embedding has the same width
  std::vector<Index> embed_hidden{128, 128, 128};
  int blocks = 8;
  std::vector<Index> conditioner_hidden{64, 64, 64};
  std::vector<Index> base_hidden{64, 64};
  BaseKind prior_base = BaseKind::conditional_normal;
  BaseKind grasp_base = BaseKind::conditional_normal;
  std::vector<Index> inference_hidden{128, 128};
  int pe_bands = 4;
  double cvae_sigma = 0.1;
  std::vector<Index> cvae_hidden{128, 128};

  void validate() const;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct TrainConfig {
  double lr = 1e-4;
  Index batch = 64;
  int iterations = 20000;
  double beta_start = 1e-7;
  double beta_end = 1e-1;
  double weight_decay = 0.01;
  double grad_clip = 0.0;  // global-norm clip; 0 disables
  std::uint64_t seed = 0;
  int snapshot_every = 100;

  void validate() const;
  /// Linear schedule: beta_start at iteration 0, beta_end at the last iteration.
  double beta(int iteration) const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Training pairs: grasp rows referencing observation rows.
struct GraspSet {
  Matrix features;           // observations x feature_dim
  Matrix grasps;             // grasps x grasp_dim
  std::vector<Index> owner;  // observation row of each grasp

  Index size() const { return grasps.rows(); }
  void validate(Index feature_dim, Index grasp_dim) const;
  /// Feature rows matching `grasp_rows`.
  Matrix features_for(const std::vector<Index>& grasp_rows) const;
  Matrix grasps_for(const std::vector<Index>& grasp_rows) const;
};

/// A point cloud as the models see it.
struct Observation {
  RowVector feature;  // BPS distances divided by the basis radius
  CanonicalFrame frame;
};
Observation observe(const PointCloud& cloud, const BpsBasis& basis);

struct TrainLog {
  std::vector<double> loss;
  std::vector<double> recon;
  std::vector<double> kld;
  std::vector<double> beta;
  bool diverged = false;
  std::string divergence;  // offending term when diverged
};

using ProgressFn = std::function<void(int iteration, double loss)>;

struct ElboTerms {
  double loss = 0.0;
  double recon = 0.0;    // mean log p(g | z)
  double entropy = 0.0;  // mean H[q(z | x, g)]
  double prior = 0.0;    // mean log p(z | x)
  double kld = 0.0;      // -(entropy + prior)
};

/// Latent-variable grasp model: observation embedder, prior flow p(z | x),
/// grasp flow p(g | z) and a Gaussian inference network q(z | x, g).
class LvmModel {
 public:
  struct Samples {
    Matrix grasps;
    Vector grasp_logp;  // log p(g | z)
    Vector prior_logp;  // log p(z | x)
    Matrix latents;
  };

  LvmModel() = default;
  LvmModel(const ModelConfig& config, Rng& rng, FlowInit init = FlowInit::random);

  Var embed(Tape& tape, const Matrix& features) const;
  Matrix embed(const Matrix& features) const;
  /// Mean and log-std of q(z | x, g), one row per grasp.
  std::pair<Var, Var> posterior(Tape& tape, Var embedding, const Matrix& grasps) const;
  std::pair<Matrix, Matrix> posterior(const Matrix& features, const Matrix& grasps) const;

  /// Negative beta-weighted ELBO averaged over the batch, with caller noise
  /// (rows x latent_dim) for the reparameterized latent draw.
  Var elbo_loss(Tape& tape, const Matrix& features, const Matrix& grasps, double beta,
                const Matrix& noise, ElboTerms* terms = nullptr) const;
  Var elbo_loss(Tape& tape, const Matrix& features, const Matrix& grasps, double beta, Rng& rng,
                ElboTerms* terms = nullptr) const;

  /// Data-dependent actnorm initialization of both flows.
  void initialize(const Matrix& features, const Matrix& grasps, Rng& rng);

  /// Ancestral sampling for one observation.
  Samples sample(const RowVector& feature, Index n, Rng& rng) const;
  /// log p(g | z*) with z* the mean of `m` prior draws.
  Vector grasp_log_likelihood(const RowVector& feature, const Matrix& grasps, Rng& rng,
                              Index m = 16) const;
  /// Mean log p(z | x) over `m` prior draws; higher means more familiar.
  double ood_score(const RowVector& feature, Rng& rng, Index m = 32) const;
  /// Importance-weighted estimate of log p(g | x) with q as proposal, per grasp.
  Vector importance_log_likelihood(const Matrix& features, const Matrix& grasps, Index k,
                                   Rng& rng) const;

  std::vector<Parameter*> parameters();
  std::vector<Parameter*> state();
  void validate() const;

  ModelConfig config;
  Mlp embedder;
  FlowStack prior_flow;
  FlowStack grasp_flow;
  Mlp inference;
  BpsBasis basis;  // empty for models trained on raw features
};

/// Single conditional flow p(g | x) with the embedding as context.
class CnfModel {
 public:
  struct Samples {
    Matrix grasps;
    Vector log_prob;
  };

  CnfModel() = default;
  CnfModel(const ModelConfig& config, Rng& rng, FlowInit init = FlowInit::random);

  Var log_prob(Tape& tape, const Matrix& features, const Matrix& grasps) const;
  Vector log_prob(const RowVector& feature, const Matrix& grasps) const;
  Samples sample(const RowVector& feature, Index n, Rng& rng) const;
  void initialize(const Matrix& features, const Matrix& grasps);

  std::vector<Parameter*> parameters();
  std::vector<Parameter*> state();
  void validate() const;

  ModelConfig config;
  Mlp embedder;
  FlowStack flow;
  BpsBasis basis;
};

/// Conditional VAE with a fixed N(0, I) prior and an isotropic Gaussian decoder.
class CvaeBaseline {
 public:
  CvaeBaseline() = default;
  CvaeBaseline(const ModelConfig& config, Rng& rng);

  Var elbo_loss(Tape& tape, const Matrix& features, const Matrix& grasps, double beta,
                const Matrix& noise, ElboTerms* terms = nullptr) const;
  /// Decoder means for z ~ N(0, I).
  Matrix sample(const RowVector& feature, Index n, Rng& rng) const;
  Matrix decode(const Matrix& features, const Matrix& latents) const;

  std::vector<Parameter*> parameters();
  std::vector<Parameter*> state() { return parameters(); }

  ModelConfig config;
  Mlp embedder;
  Mlp encoder;
  Mlp decoder;
  BpsBasis basis;
};

/// KL(N(mu, sigma^2) || N(0, 1)) for one dimension.
double gaussian_kl(double mu, double sigma);

TrainLog train_lvm(LvmModel& model, const GraspSet& data, const TrainConfig& config,
                   const ProgressFn& progress = {});
TrainLog train_cnf(CnfModel& model, const GraspSet& data, const TrainConfig& config,
                   const ProgressFn& progress = {});
TrainLog train_cvae(CvaeBaseline& model, const GraspSet& data, const TrainConfig& config,
                    const ProgressFn& progress = {});

// Checkpoints. The container layout is documented in docs/formats.md.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string kind;  // "lvm", "cnf", "cvae" or "evaluator"
  nlohmann::json config;
  BpsBasis basis;    // zero points when absent
  std::vector<std::pair<std::string, Matrix>> tensors;
};

std::string serialize_checkpoint(const std::string& kind, const nlohmann::json& config,
                                 const BpsBasis& basis, const std::vector<Parameter*>& state);
Checkpoint deserialize_checkpoint(std::string_view bytes);
Checkpoint read_checkpoint(const std::string& path);
/// Copy tensors into `state`, requiring matching names and shapes in order.
void restore_state(const Checkpoint& ckpt, const std::vector<Parameter*>& state);

void save_model(const std::string& path, LvmModel& model);
void save_model(const std::string& path, CnfModel& model);
void save_model(const std::string& path, CvaeBaseline& model);
LvmModel load_lvm(const Checkpoint& ckpt);
CnfModel load_cnf(const Checkpoint& ckpt);
CvaeBaseline load_cvae(const Checkpoint& ckpt);

}  // namespace graspflow
