#include "graspflow/models.hpp"

#include "graspflow/encoding.hpp"

#include <cmath>
#include <numbers>

namespace graspflow {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);
constexpr double kLogStdClamp = 7.0;

// Re-tag numeric failures with the loss term that produced them.
template <typename F>
Var term(const char* name, F&& f) {
  try {
    return f();
  } catch (const NumericError& e) {
    throw NumericError(name, e.what());
  }
}

double mean_of(Var v) { return v.value().mean(); }

std::string to_string(BaseKind k) {
  return k == BaseKind::standard_normal ? "standard" : "conditional";
}

BaseKind parse_base(const std::string& s) {
  if (s == "standard") return BaseKind::standard_normal;
  if (s == "conditional") return BaseKind::conditional_normal;
  throw DataError("unknown base distribution '" + s + "'");
}

FlowConfig flow_config(const ModelConfig& c, Index dim, BaseKind base) {
  FlowConfig f;
  f.dim = dim;
  f.context_dim = c.latent_dim;
  f.blocks = c.blocks;
  f.conditioner_hidden = c.conditioner_hidden;
  f.base = base;
  f.base_hidden = c.base_hidden;
  return f;
}

Mlp make_embedder(const std::string& name, const ModelConfig& c, Rng& rng) {
  return Mlp(name, MlpShape{c.feature_dim, 0, c.embed_hidden, c.latent_dim, Activation::relu, false},
             rng);
}

Index encoded_grasp_dim(const ModelConfig& c) { return c.grasp_dim * (2 * c.pe_bands + 1); }

}  // namespace

// ------------------------------------------------------------------ configs

void ModelConfig::validate() const {
  require(feature_dim >= 1, "ModelConfig: feature_dim must be positive");
  require(grasp_dim >= 2 && latent_dim >= 2, "ModelConfig: flows need at least 2 dimensions");
  require(blocks >= 1, "ModelConfig: blocks must be positive");
  require(pe_bands >= 0, "ModelConfig: pe_bands must be non-negative");
  require(cvae_sigma > 0.0, "ModelConfig: cvae_sigma must be positive");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"feature_dim", c.feature_dim},
          {"grasp_dim", c.grasp_dim},
          {"latent_dim", c.latent_dim},
          {"embed_hidden", c.embed_hidden},
          {"blocks", c.blocks},
          {"conditioner_hidden", c.conditioner_hidden},
          {"base_hidden", c.base_hidden},
          {"prior_base", to_string(c.prior_base)},
          {"grasp_base", to_string(c.grasp_base)},
          {"inference_hidden", c.inference_hidden},
          {"pe_bands", c.pe_bands},
          {"cvae_sigma", c.cvae_sigma},
          {"cvae_hidden", c.cvae_hidden}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.feature_dim = j.value("feature_dim", c.feature_dim);
    c.grasp_dim = j.value("grasp_dim", c.grasp_dim);
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    c.embed_hidden = j.value("embed_hidden", c.embed_hidden);
    c.blocks = j.value("blocks", c.blocks);
    c.conditioner_hidden = j.value("conditioner_hidden", c.conditioner_hidden);
    c.base_hidden = j.value("base_hidden", c.base_hidden);
    c.prior_base = parse_base(j.value("prior_base", to_string(c.prior_base)));
    c.grasp_base = parse_base(j.value("grasp_base", to_string(c.grasp_base)));
    c.inference_hidden = j.value("inference_hidden", c.inference_hidden);
    c.pe_bands = j.value("pe_bands", c.pe_bands);
    c.cvae_sigma = j.value("cvae_sigma", c.cvae_sigma);
    c.cvae_hidden = j.value("cvae_hidden", c.cvae_hidden);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

void TrainConfig::validate() const {
  require(lr > 0.0 && batch >= 1 && iterations >= 1, "TrainConfig: lr, batch and iterations must be positive");
  require(beta_start >= 0.0 && beta_start <= beta_end, "TrainConfig: need 0 <= beta_start <= beta_end");
  require(weight_decay >= 0.0 && grad_clip >= 0.0, "TrainConfig: negative weight decay or clip");
  require(snapshot_every >= 1, "TrainConfig: snapshot_every must be positive");
}

double TrainConfig::beta(int iteration) const {
  if (iterations <= 1) return beta_end;
  if (iteration <= 0) return beta_start;
  if (iteration >= iterations - 1) return beta_end;
  const double f = static_cast<double>(iteration) / static_cast<double>(iterations - 1);
  return beta_start + f * (beta_end - beta_start);
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"batch", c.batch},
          {"iterations", c.iterations},
          {"beta_start", c.beta_start},
          {"beta_end", c.beta_end},
          {"weight_decay", c.weight_decay},
          {"grad_clip", c.grad_clip},
          {"seed", c.seed},
          {"snapshot_every", c.snapshot_every}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.lr = j.value("lr", c.lr);
    c.batch = j.value("batch", c.batch);
    c.iterations = j.value("iterations", c.iterations);
    c.beta_start = j.value("beta_start", c.beta_start);
    c.beta_end = j.value("beta_end", c.beta_end);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.seed = j.value("seed", c.seed);
    c.snapshot_every = j.value("snapshot_every", c.snapshot_every);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

// ------------------------------------------------------------------- data

void GraspSet::validate(Index feature_dim, Index grasp_dim) const {
  if (grasps.rows() == 0) throw DataError("training set is empty");
  if (features.cols() != feature_dim)
    throw DataError("feature width " + std::to_string(features.cols()) + " does not match the model (" +
                    std::to_string(feature_dim) + ")");
  if (grasps.cols() != grasp_dim) throw DataError("grasp width does not match the model");
  if (static_cast<Index>(owner.size()) != grasps.rows())
    throw DataError("every grasp needs an owning observation");
  for (Index o : owner)
    if (o < 0 || o >= features.rows()) throw DataError("grasp references a missing observation");
  require_finite(features, "training features");
  require_finite(grasps, "training grasps");
}

Matrix GraspSet::features_for(const std::vector<Index>& rows) const {
  Matrix out(static_cast<Index>(rows.size()), features.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(i) = features.row(owner[rows[i]]);
  return out;
}

Matrix GraspSet::grasps_for(const std::vector<Index>& rows) const {
  Matrix out(static_cast<Index>(rows.size()), grasps.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(i) = grasps.row(rows[i]);
  return out;
}

Observation observe(const PointCloud& cloud, const BpsBasis& basis) {
  Observation o;
  o.frame = canonical_frame(cloud, basis.radius);
  o.feature = bps_encode(to_canonical(cloud, o.frame).points, basis).transpose() / basis.radius;
  return o;
}

// ---------------------------------------------------------------------- LVM

LvmModel::LvmModel(const ModelConfig& c, Rng& rng, FlowInit init) : config(c) {
  c.validate();
  embedder = make_embedder("lvm.embedder", c, rng);
  prior_flow = FlowStack("lvm.prior", flow_config(c, c.latent_dim, c.prior_base), init, rng);
  grasp_flow = FlowStack("lvm.grasp", flow_config(c, c.grasp_dim, c.grasp_base), init, rng);
  inference = Mlp("lvm.inference",
                  MlpShape{encoded_grasp_dim(c) + c.latent_dim, 0, c.inference_hidden,
                           2 * c.latent_dim, Activation::tanh, false},
                  rng);
  // Start from q(z | x, g) = N(0, I).
  inference.zero_output_layer();
}

Var LvmModel::embed(Tape& tape, const Matrix& features) const {
  return embedder.forward(tape, tape.constant(features));
}

Matrix LvmModel::embed(const Matrix& features) const { return embedder.eval(features); }

std::pair<Var, Var> LvmModel::posterior(Tape& tape, Var embedding, const Matrix& grasps) const {
  const Index l = config.latent_dim;
  Var in = concat_cols(tape.constant(positional_encode(grasps, config.pe_bands)), embedding);
  Var h = inference.forward(tape, in);
  return {slice_cols(h, 0, l), soft_clamp(slice_cols(h, l, l), kLogStdClamp)};
}

std::pair<Matrix, Matrix> LvmModel::posterior(const Matrix& features, const Matrix& grasps) const {
  Tape tape;
  auto [mu, log_std] = posterior(tape, embed(tape, features), grasps);
  return {mu.value(), log_std.value()};
}

Var LvmModel::elbo_loss(Tape& tape, const Matrix& features, const Matrix& grasps, double beta,
                        const Matrix& noise, ElboTerms* terms) const {
  require(beta >= 0.0, "elbo_loss: beta must be non-negative");
  require(grasps.rows() >= 1 && features.rows() == grasps.rows(),
          "elbo_loss: need one feature row per grasp");
  require(noise.rows() == grasps.rows() && noise.cols() == config.latent_dim,
          "elbo_loss: noise must be rows x latent_dim");
  const double l = static_cast<double>(config.latent_dim);

  Var e = term("embedding", [&] { return embed(tape, features); });
  Var mu, log_std;
  term("posterior", [&] {
    std::tie(mu, log_std) = posterior(tape, e, grasps);
    return mu;
  });
  Var z = term("latent", [&] { return add(mu, mul(exp(log_std), tape.constant(noise))); });
  Var recon = term("recon", [&] { return grasp_flow.log_prob(tape, tape.constant(grasps), z); });
  Var entropy = term("entropy", [&] {
    return add_scalar(sum_cols(log_std), 0.5 * l * (kLog2Pi + 1.0));
  });
  Var prior = term("prior", [&] { return prior_flow.log_prob(tape, z, e); });
  Var loss = term("loss", [&] { return scale(mean(add(recon, scale(add(entropy, prior), beta))), -1.0); });
  if (terms) {
    terms->loss = loss.value()(0, 0);
    terms->recon = mean_of(recon);
    terms->entropy = mean_of(entropy);
    terms->prior = mean_of(prior);
    terms->kld = -(terms->entropy + terms->prior);
  }
  return loss;
}

Var LvmModel::elbo_loss(Tape& tape, const Matrix& features, const Matrix& grasps, double beta,
                        Rng& rng, ElboTerms* terms) const {
  return elbo_loss(tape, features, grasps, beta,
                   standard_normal(grasps.rows(), config.latent_dim, rng), terms);
}

void LvmModel::initialize(const Matrix& features, const Matrix& grasps, Rng& rng) {
  auto [mu, log_std] = posterior(features, grasps);
  const Matrix z =
      mu + (log_std.array().exp() * standard_normal(mu.rows(), mu.cols(), rng).array()).matrix();
  prior_flow.initialize_actnorm(z, embed(features));
  grasp_flow.initialize_actnorm(grasps, z);
}

LvmModel::Samples LvmModel::sample(const RowVector& feature, Index n, Rng& rng) const {
  require(n >= 1, "sample: n must be at least 1");
  const Matrix e = embed(Matrix(feature));
  auto z = prior_flow.sample(e, n, rng);
  auto g = grasp_flow.sample(z.x, n, rng);
  return {std::move(g.x), std::move(g.log_prob), std::move(z.log_prob), std::move(z.x)};
}

Vector LvmModel::grasp_log_likelihood(const RowVector& feature, const Matrix& grasps, Rng& rng,
                                      Index m) const {
  require(m >= 1, "grasp_log_likelihood: m must be at least 1");
  const Matrix e = embed(Matrix(feature));
  const Matrix z_star = prior_flow.sample(e, m, rng).x.colwise().mean();
  return grasp_flow.log_prob(grasps, z_star);
}

double LvmModel::ood_score(const RowVector& feature, Rng& rng, Index m) const {
  require(m >= 1, "ood_score: m must be at least 1");
  return prior_flow.sample(embed(Matrix(feature)), m, rng).log_prob.mean();
}

Vector LvmModel::importance_log_likelihood(const Matrix& features, const Matrix& grasps, Index k,
                                           Rng& rng) const {
  require(k >= 1 && features.rows() == grasps.rows(), "importance_log_likelihood: bad arguments");
  const Index l = config.latent_dim;
  const Matrix e = embed(features);
  auto [mu, log_std] = posterior(features, grasps);
  Vector out(grasps.rows());
  for (Index i = 0; i < grasps.rows(); ++i) {
    const Matrix eps = standard_normal(k, l, rng);
    const Matrix sd = log_std.row(i).array().exp().replicate(k, 1).matrix();
    const Matrix z = mu.row(i).replicate(k, 1) + eps.cwiseProduct(sd);
    const Vector log_q = (-0.5 * eps.array().square().rowwise().sum()).matrix() -
                         Vector::Constant(k, log_std.row(i).sum() + 0.5 * l * kLog2Pi);
    const Vector log_w = grasp_flow.log_prob(grasps.row(i).replicate(k, 1), z) +
                         prior_flow.log_prob(z, e.row(i)) - log_q;
    const double top = log_w.maxCoeff();
    out(i) = top + std::log((log_w.array() - top).exp().mean());
  }
  return out;
}

std::vector<Parameter*> LvmModel::parameters() {
  std::vector<Parameter*> out = embedder.parameters();
  append(out, prior_flow.parameters());
  append(out, grasp_flow.parameters());
  append(out, inference.parameters());
  return out;
}

std::vector<Parameter*> LvmModel::state() {
  std::vector<Parameter*> out = embedder.parameters();
  append(out, prior_flow.state());
  append(out, grasp_flow.state());
  append(out, inference.parameters());
  return out;
}

void LvmModel::validate() const {
  prior_flow.validate();
  grasp_flow.validate();
}

// ---------------------------------------------------------------------- CNF

CnfModel::CnfModel(const ModelConfig& c, Rng& rng, FlowInit init) : config(c) {
  c.validate();
  embedder = make_embedder("cnf.embedder", c, rng);
  flow = FlowStack("cnf.flow", flow_config(c, c.grasp_dim, c.grasp_base), init, rng);
}

Var CnfModel::log_prob(Tape& tape, const Matrix& features, const Matrix& grasps) const {
  require(features.rows() == grasps.rows(), "CnfModel::log_prob: need one feature row per grasp");
  Var e = term("embedding", [&] { return embedder.forward(tape, tape.constant(features)); });
  return term("log_prob", [&] { return flow.log_prob(tape, tape.constant(grasps), e); });
}

Vector CnfModel::log_prob(const RowVector& feature, const Matrix& grasps) const {
  return flow.log_prob(grasps, embedder.eval(Matrix(feature)));
}

CnfModel::Samples CnfModel::sample(const RowVector& feature, Index n, Rng& rng) const {
  auto s = flow.sample(embedder.eval(Matrix(feature)), n, rng);
  return {std::move(s.x), std::move(s.log_prob)};
}

void CnfModel::initialize(const Matrix& features, const Matrix& grasps) {
  flow.initialize_actnorm(grasps, embedder.eval(features));
}

std::vector<Parameter*> CnfModel::parameters() {
  std::vector<Parameter*> out = embedder.parameters();
  append(out, flow.parameters());
  return out;
}

std::vector<Parameter*> CnfModel::state() {
  std::vector<Parameter*> out = embedder.parameters();
  append(out, flow.state());
  return out;
}

void CnfModel::validate() const { flow.validate(); }

// --------------------------------------------------------------------- cVAE

CvaeBaseline::CvaeBaseline(const ModelConfig& c, Rng& rng) : config(c) {
  c.validate();
  embedder = make_embedder("cvae.embedder", c, rng);
  encoder = Mlp("cvae.encoder",
                MlpShape{encoded_grasp_dim(c), c.latent_dim, c.cvae_hidden, 2 * c.latent_dim,
                         Activation::relu, false},
                rng);
  encoder.zero_output_layer();
  decoder = Mlp("cvae.decoder",
                MlpShape{c.latent_dim, c.latent_dim, c.cvae_hidden, c.grasp_dim, Activation::relu, false},
                rng);
}

double gaussian_kl(double mu, double sigma) {
  require(sigma > 0.0, "gaussian_kl: sigma must be positive");
  return 0.5 * (mu * mu + sigma * sigma - 2.0 * std::log(sigma) - 1.0);
}

Var CvaeBaseline::elbo_loss(Tape& tape, const Matrix& features, const Matrix& grasps, double beta,
                            const Matrix& noise, ElboTerms* terms) const {
  require(beta >= 0.0, "elbo_loss: beta must be non-negative");
  require(features.rows() == grasps.rows() && noise.rows() == grasps.rows() &&
              noise.cols() == config.latent_dim,
          "CvaeBaseline::elbo_loss: shape mismatch");
  const Index l = config.latent_dim;
  const double d = static_cast<double>(config.grasp_dim);
  const double sigma = config.cvae_sigma;

  Var e = term("embedding", [&] { return embedder.forward(tape, tape.constant(features)); });
  Var h = term("posterior", [&] {
    return encoder.forward(tape, tape.constant(positional_encode(grasps, config.pe_bands)), e);
  });
  Var mu = slice_cols(h, 0, l);
  Var log_std = soft_clamp(slice_cols(h, l, l), kLogStdClamp);
  Var z = add(mu, mul(exp(log_std), tape.constant(noise)));
  Var recon = term("recon", [&] {
    Var resid = sub(tape.constant(grasps), decoder.forward(tape, z, e));
    return add_scalar(scale(sum_cols(square(resid)), -0.5 / (sigma * sigma)),
                      -d * (std::log(sigma) + 0.5 * kLog2Pi));
  });
  Var kld = term("kld", [&] {
    Var per_dim = add_scalar(sub(add(square(mu), exp(scale(log_std, 2.0))), scale(log_std, 2.0)), -1.0);
    return scale(sum_cols(per_dim), 0.5);
  });
  Var loss = term("loss", [&] { return scale(mean(sub(recon, scale(kld, beta))), -1.0); });
  if (terms) {
    terms->loss = loss.value()(0, 0);
    terms->recon = mean_of(recon);
    terms->kld = mean_of(kld);
    terms->entropy = terms->prior = 0.0;
  }
  return loss;
}

Matrix CvaeBaseline::decode(const Matrix& features, const Matrix& latents) const {
  return decoder.eval(latents, embedder.eval(features));
}

Matrix CvaeBaseline::sample(const RowVector& feature, Index n, Rng& rng) const {
  require(n >= 1, "sample: n must be at least 1");
  return decode(Matrix(feature), standard_normal(n, config.latent_dim, rng));
}

std::vector<Parameter*> CvaeBaseline::parameters() {
  std::vector<Parameter*> out = embedder.parameters();
  append(out, encoder.parameters());
  append(out, decoder.parameters());
  return out;
}

// ----------------------------------------------------------------- training

namespace {

struct Batch {
  Matrix features;
  Matrix grasps;
};

Batch draw_batch(const GraspSet& data, Index size, Rng& rng) {
  std::uniform_int_distribution<Index> pick(0, data.size() - 1);
  std::vector<Index> rows(static_cast<std::size_t>(size));
  for (auto& r : rows) r = pick(rng);
  return {data.features_for(rows), data.grasps_for(rows)};
}

// Shared optimizer loop. `loss` records one minibatch loss on the tape.
template <typename LossFn>
TrainLog run_training(const std::vector<Parameter*>& params, const GraspSet& data,
                      const TrainConfig& cfg, Rng& rng, LossFn&& loss, const ProgressFn& progress) {
  AdamW opt(params, AdamWOptions{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  std::vector<Matrix> snapshot;
  auto take_snapshot = [&] {
    snapshot.clear();
    for (const Parameter* p : params) snapshot.push_back(p->value);
  };
  take_snapshot();

  TrainLog log;
  for (int it = 0; it < cfg.iterations; ++it) {
    const double beta = cfg.beta(it);
    try {
      Batch b = draw_batch(data, cfg.batch, rng);
      Tape tape;
      ElboTerms terms;
      Var l = loss(tape, b, beta, rng, terms);
      Gradients g = tape.backward(l);
      std::vector<Matrix> grads;
      grads.reserve(params.size());
      for (const Parameter* p : params) {
        grads.push_back(g.of(*p));
        require_finite(grads.back(), "gradient");
      }
      if (cfg.grad_clip > 0.0) clip_global_norm(grads, cfg.grad_clip);
      opt.step(grads);
      log.loss.push_back(terms.loss);
      log.recon.push_back(terms.recon);
      log.kld.push_back(terms.kld);
      log.beta.push_back(beta);
      if (progress) progress(it, terms.loss);
    } catch (const NumericError& e) {
      for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = snapshot[i];
      log.diverged = true;
      log.divergence = e.term();
      break;
    }
    if ((it + 1) % cfg.snapshot_every == 0) take_snapshot();
  }
  return log;
}

}  // namespace

TrainLog train_lvm(LvmModel& model, const GraspSet& data, const TrainConfig& cfg,
                   const ProgressFn& progress) {
  cfg.validate();
  data.validate(model.config.feature_dim, model.config.grasp_dim);
  Rng rng(cfg.seed);
  if (!model.prior_flow.initialized() || !model.grasp_flow.initialized()) {
    Batch first = draw_batch(data, std::max<Index>(cfg.batch, 16), rng);
    model.initialize(first.features, first.grasps, rng);
  }
  return run_training(
      model.parameters(), data, cfg, rng,
      [&](Tape& t, const Batch& b, double beta, Rng& r, ElboTerms& terms) {
        return model.elbo_loss(t, b.features, b.grasps, beta, r, &terms);
      },
      progress);
}

TrainLog train_cnf(CnfModel& model, const GraspSet& data, const TrainConfig& cfg,
                   const ProgressFn& progress) {
  cfg.validate();
  data.validate(model.config.feature_dim, model.config.grasp_dim);
  Rng rng(cfg.seed);
  if (!model.flow.initialized()) {
    Batch first = draw_batch(data, std::max<Index>(cfg.batch, 16), rng);
    model.initialize(first.features, first.grasps);
  }
  return run_training(
      model.parameters(), data, cfg, rng,
      [&](Tape& t, const Batch& b, double, Rng&, ElboTerms& terms) {
        Var lp = model.log_prob(t, b.features, b.grasps);
        Var loss = scale(mean(lp), -1.0);
        terms.loss = loss.value()(0, 0);
        terms.recon = -terms.loss;
        return loss;
      },
      progress);
}

TrainLog train_cvae(CvaeBaseline& model, const GraspSet& data, const TrainConfig& cfg,
                    const ProgressFn& progress) {
  cfg.validate();
  data.validate(model.config.feature_dim, model.config.grasp_dim);
  Rng rng(cfg.seed);
  return run_training(
      model.parameters(), data, cfg, rng,
      [&](Tape& t, const Batch& b, double beta, Rng& r, ElboTerms& terms) {
        return model.elbo_loss(t, b.features, b.grasps, beta,
                               standard_normal(b.grasps.rows(), model.config.latent_dim, r), &terms);
      },
      progress);
}

}  // namespace graspflow
