#include "graspflow/flows.hpp"

#include <Eigen/QR>

#include <cmath>
#include <numbers>

namespace graspflow {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

Var zeros_col(Tape& tape, Index rows) { return tape.constant(Matrix::Zero(rows, 1)); }

}  // namespace

// ---------------------------------------------------------------- ActNorm

ActNorm::ActNorm(const std::string& name, Index dim)
    : log_scale{name + ".log_scale", Matrix::Zero(1, dim)},
      shift{name + ".shift", Matrix::Zero(1, dim)},
      initialized_{name + ".initialized", Matrix::Zero(1, 1)} {}

void ActNorm::set_identity() {
  log_scale.value.setZero();
  shift.value.setZero();
  initialized_.value(0, 0) = 1.0;
}

void ActNorm::initialize(const Matrix& x) {
  require(x.rows() >= 2, "ActNorm::initialize: batch too small");
  require_finite(x, "actnorm init batch");
  const RowVector mean = x.colwise().mean();
  const RowVector var = (x.rowwise() - mean).array().square().colwise().mean();
  if ((var.array() < 1e-20).any())
    throw DataError("ActNorm::initialize: zero variance in the initialization batch");
  shift.value = mean;
  log_scale.value = 0.5 * var.array().log().matrix();
  initialized_.value(0, 0) = 1.0;
}

void ActNorm::check_initialized() const {
  if (!initialized()) throw ContractError("ActNorm '" + log_scale.name + "' is not initialized");
}

Var ActNorm::normalize(Tape& tape, Var x, Var& logdet) const {
  check_initialized();
  Var ls = tape.param(log_scale);
  Var u = mul(sub(x, tape.param(shift)), exp(-ls));
  logdet = sub(logdet, sum(ls));
  return u;
}

Matrix ActNorm::generate(const Matrix& u, Vector& logdet) const {
  check_initialized();
  Matrix x = (u.array().rowwise() * log_scale.value.row(0).array().exp()).matrix();
  x.rowwise() += shift.value.row(0);
  logdet.array() += log_scale.value.sum();
  return x;
}

// -------------------------------------------------------------- InvLinear

InvLinear::InvLinear(const std::string& name, Index dim)
    : lower{name + ".lower", Matrix::Zero(dim, dim)},
      upper{name + ".upper", Matrix::Zero(dim, dim)},
      log_diag{name + ".log_diag", Matrix::Zero(1, dim)},
      perm_{name + ".perm", Matrix::Zero(1, dim)},
      sign_{name + ".sign", Matrix::Ones(1, dim)} {
  set_identity();
}

void InvLinear::set_identity() {
  const Index d = log_diag.value.cols();
  lower.value.setZero();
  upper.value.setZero();
  log_diag.value.setZero();
  sign_.value.setOnes();
  for (Index i = 0; i < d; ++i) perm_.value(0, i) = static_cast<double>(i);
}

void InvLinear::randomize(Rng& rng) {
  const Index d = log_diag.value.cols();
  const Matrix q = Eigen::HouseholderQR<Matrix>(standard_normal(d, d, rng)).householderQ();
  Eigen::PartialPivLU<Matrix> lu(q);
  const Matrix packed = lu.matrixLU();
  const auto& idx = lu.permutationP().indices();
  lower.value = packed.triangularView<Eigen::StrictlyLower>();
  upper.value = packed.triangularView<Eigen::StrictlyUpper>();
  for (Index i = 0; i < d; ++i) {
    const double u = packed(i, i);
    sign_.value(0, i) = u < 0.0 ? -1.0 : 1.0;
    log_diag.value(0, i) = std::log(std::abs(u));
    perm_.value(0, i) = static_cast<double>(idx(i));
  }
}

std::vector<Index> InvLinear::permutation() const {
  std::vector<Index> p(perm_.value.cols());
  for (Index i = 0; i < perm_.value.cols(); ++i) p[i] = static_cast<Index>(perm_.value(0, i));
  return p;
}

void InvLinear::validate_buffers() const {
  const Index d = perm_.value.cols();
  std::vector<bool> seen(d, false);
  for (Index i = 0; i < d; ++i) {
    const double v = perm_.value(0, i);
    const auto k = static_cast<Index>(v);
    if (v != static_cast<double>(k) || k < 0 || k >= d || seen[k])
      throw FormatError(perm_.name + " is not a permutation");
    seen[k] = true;
    const double s = sign_.value(0, i);
    if (s != 1.0 && s != -1.0) throw FormatError(sign_.name + " entries must be +-1");
  }
}

Matrix InvLinear::weight() const {
  Tape t;
  return lu_compose(t.param(lower), t.param(upper), t.param(log_diag), permutation(),
                    sign_.value.row(0).transpose())
      .value();
}

Var InvLinear::normalize(Tape& tape, Var x, Var& logdet) const {
  Var ld = tape.param(log_diag);
  Var w = lu_compose(tape.param(lower), tape.param(upper), ld, permutation(),
                     sign_.value.row(0).transpose());
  logdet = add(logdet, sum(ld));
  return matmul(x, w);
}

Matrix InvLinear::generate(const Matrix& u, Vector& logdet) const {
  const Index d = log_diag.value.cols();
  Matrix l = lower.value.triangularView<Eigen::StrictlyLower>();
  l.diagonal().setOnes();
  Matrix up = upper.value.triangularView<Eigen::StrictlyUpper>();
  up.diagonal() = sign_.value.row(0).transpose().cwiseProduct(
      log_diag.value.row(0).transpose().array().exp().matrix());
  // x = u U^{-1} L^{-1} P^{-1}
  Matrix y = up.triangularView<Eigen::Upper>().solve<Eigen::OnTheRight>(u);
  y = l.triangularView<Eigen::UnitLower>().solve<Eigen::OnTheRight>(y);
  const auto perm = permutation();
  Matrix x(u.rows(), d);
  for (Index j = 0; j < d; ++j) x.col(j) = y.col(perm[j]);
  logdet.array() -= log_abs_det();
  return x;
}

// --------------------------------------------------------------- Coupling

Coupling::Coupling(const std::string& name, Index dim, Index context_dim, bool swap,
                   const std::vector<Index>& hidden, double scale_clamp, Rng& rng)
    : dim_(dim), split_(dim / 2), swap_(swap), clamp_(scale_clamp) {
  require(dim >= 2, "Coupling: dimension must be at least 2");
  require(scale_clamp > 0.0, "Coupling: scale clamp must be positive");
  conditioner = Mlp(name + ".conditioner",
                    MlpShape{identity_size(), context_dim, hidden, 2 * transformed_size(),
                             Activation::relu, false},
                    rng);
  conditioner.zero_output_layer();
}

Var Coupling::normalize(Tape& tape, Var x, Var ctx, Var& logdet) const {
  const Index nb = transformed_size();
  Var ident = slice_cols(x, identity_start(), identity_size());
  Var moving = slice_cols(x, transformed_start(), nb);
  Var h = conditioner.shape().context_dim > 0 ? conditioner.forward(tape, ident, ctx)
                                              : conditioner.forward(tape, ident);
  Var s = soft_clamp(slice_cols(h, 0, nb), clamp_);
  Var t = slice_cols(h, nb, nb);
  Var out = mul(sub(moving, t), exp(-s));
  logdet = sub(logdet, sum_cols(s));
  return swap_ ? concat_cols(out, ident) : concat_cols(ident, out);
}

Matrix Coupling::generate(const Matrix& u, const Matrix& ctx, Vector& logdet) const {
  const Index nb = transformed_size();
  const Matrix ident = u.middleCols(identity_start(), identity_size());
  const Matrix h = conditioner.shape().context_dim > 0 ? conditioner.eval(ident, ctx)
                                                       : conditioner.eval(ident);
  const Matrix s = clamp_ * (h.leftCols(nb).array() / clamp_).tanh();
  Matrix x = u;
  x.middleCols(transformed_start(), nb) =
      (u.middleCols(transformed_start(), nb).array() * s.array().exp() + h.middleCols(nb, nb).array())
          .matrix();
  logdet += s.rowwise().sum();
  return x;
}

// ------------------------------------------------------- BaseDistribution

BaseDistribution::BaseDistribution(const std::string& name, BaseKind kind, Index dim,
                                   Index context_dim, const std::vector<Index>& hidden, Rng& rng)
    : kind_(kind), dim_(dim) {
  if (kind == BaseKind::conditional_normal) {
    require(context_dim > 0, "BaseDistribution: conditional base needs a context");
    net = Mlp(name + ".net", MlpShape{0, context_dim, hidden, 2 * dim, Activation::relu, false}, rng);
    net.zero_output_layer();
  }
}

Var BaseDistribution::log_prob(Tape& tape, Var u, Var ctx) const {
  const double norm = static_cast<double>(dim_) * kHalfLog2Pi;
  if (kind_ == BaseKind::standard_normal)
    return add_scalar(scale(sum_cols(square(u)), -0.5), -norm);
  Var out = net.forward(tape, tape.constant(Matrix(ctx.rows(), 0)), ctx);
  Var mean = slice_cols(out, 0, dim_);
  Var log_std = soft_clamp(slice_cols(out, dim_, dim_), kLogStdClamp);
  Var z = mul(sub(u, mean), exp(-log_std));
  return add_scalar(sub(scale(sum_cols(square(z)), -0.5), sum_cols(log_std)), -norm);
}

std::pair<Matrix, Matrix> BaseDistribution::moments(const Matrix& ctx, Index rows) const {
  if (kind_ == BaseKind::standard_normal)
    return {Matrix::Zero(rows, dim_), Matrix::Zero(rows, dim_)};
  Matrix out = net.eval(Matrix(ctx.rows(), 0), ctx);
  if (out.rows() != rows) out = out.replicate(rows, 1).eval();
  Matrix log_std = kLogStdClamp * (out.rightCols(dim_).array() / kLogStdClamp).tanh();
  return {out.leftCols(dim_), log_std};
}

Matrix BaseDistribution::sample(const Matrix& ctx, Index n, Rng& rng) const {
  auto [mean, log_std] = moments(ctx, n);
  return mean + (standard_normal(n, dim_, rng).array() * log_std.array().exp()).matrix();
}

// -------------------------------------------------------------- FlowStack

FlowStack::FlowStack(const std::string& name, const FlowConfig& config, FlowInit init, Rng& rng)
    : config_(config) {
  require(config.dim >= 2, "FlowStack: dimension must be at least 2");
  require(config.blocks >= 1, "FlowStack: at least one block required");
  for (int k = 0; k < config.blocks; ++k) {
    const std::string prefix = name + ".block" + std::to_string(k);
    ActNorm an(prefix + ".actnorm", config.dim);
    InvLinear lin(prefix + ".inv_linear", config.dim);
    if (init == FlowInit::identity)
      an.set_identity();
    else
      lin.randomize(rng);
    layers_.emplace_back(std::move(an));
    layers_.emplace_back(std::move(lin));
    layers_.emplace_back(Coupling(prefix + ".coupling", config.dim, config.context_dim, k % 2 == 1,
                                  config.conditioner_hidden, config.scale_clamp, rng));
  }
  base_ = BaseDistribution(name + ".base", config.base, config.dim, config.context_dim,
                           config.base_hidden, rng);
}

Matrix FlowStack::broadcast_context(const Matrix& ctx, Index rows) const {
  if (ctx.cols() != config_.context_dim)
    throw ContractError("FlowStack: context has " + std::to_string(ctx.cols()) +
                        " columns, expected " + std::to_string(config_.context_dim));
  if (config_.context_dim == 0) return Matrix(rows, 0);
  if (ctx.rows() == rows) return ctx;
  if (ctx.rows() == 1) return ctx.replicate(rows, 1);
  throw ContractError("FlowStack: context rows must be 1 or match the batch");
}

Var FlowStack::normalize_layers(Tape& tape, Var x, Var ctx, Var& logdet,
                                std::size_t layer_count) const {
  for (std::size_t i = 0; i < layer_count; ++i) {
    const FlowLayer& layer = layers_[i];
    if (const auto* a = std::get_if<ActNorm>(&layer))
      x = a->normalize(tape, x, logdet);
    else if (const auto* l = std::get_if<InvLinear>(&layer))
      x = l->normalize(tape, x, logdet);
    else
      x = std::get<Coupling>(layer).normalize(tape, x, ctx, logdet);
  }
  return x;
}

std::pair<Var, Var> FlowStack::normalize(Tape& tape, Var x, Var ctx) const {
  require(x.cols() == config_.dim, "FlowStack: event dimension mismatch");
  require(ctx.cols() == config_.context_dim && ctx.rows() == x.rows(),
          "FlowStack: context shape mismatch");
  Var logdet = zeros_col(tape, x.rows());
  Var u = normalize_layers(tape, x, ctx, logdet, layers_.size());
  return {u, logdet};
}

Var FlowStack::log_prob(Tape& tape, Var x, Var ctx) const {
  auto [u, logdet] = normalize(tape, x, ctx);
  return add(base_.log_prob(tape, u, ctx), logdet);
}

FlowStack::Transformed FlowStack::forward(const Matrix& u, const Matrix& ctx) const {
  require(u.cols() == config_.dim, "FlowStack: event dimension mismatch");
  require_finite(u, "flow_forward input");
  const Matrix c = broadcast_context(ctx, u.rows());
  Transformed out{u, Vector::Zero(u.rows())};
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
    out.value = generate_layer(*it, out.value, c, out.logdet);
  require_finite(out.value, "flow_forward output");
  return out;
}

FlowStack::Transformed FlowStack::inverse(const Matrix& x, const Matrix& ctx) const {
  Tape tape;
  auto [u, logdet] =
      normalize(tape, tape.constant(x), tape.constant(broadcast_context(ctx, x.rows())));
  return {u.value(), logdet.value().col(0)};
}

Vector FlowStack::log_prob(const Matrix& x, const Matrix& ctx) const {
  Tape tape;
  return log_prob(tape, tape.constant(x), tape.constant(broadcast_context(ctx, x.rows())))
      .value()
      .col(0);
}

FlowStack::Samples FlowStack::sample(const Matrix& ctx, Index n, Rng& rng) const {
  require(n >= 1, "FlowStack::sample: n must be at least 1");
  return sample_from_noise(ctx, standard_normal(n, config_.dim, rng));
}

FlowStack::Samples FlowStack::sample_from_noise(const Matrix& ctx, const Matrix& noise) const {
  const Index n = noise.rows();
  const Matrix c = broadcast_context(ctx, n);
  auto [mean, log_std] = base_.moments(c, n);
  Matrix u = mean + (noise.array() * log_std.array().exp()).matrix();
  const Vector base_lp = (-0.5 * noise.array().square().rowwise().sum()).matrix() -
                         log_std.rowwise().sum() -
                         Vector::Constant(n, static_cast<double>(config_.dim) * kHalfLog2Pi);
  Transformed fwd = forward(u, c);
  return {std::move(fwd.value), base_lp - fwd.logdet, std::move(u)};
}

void FlowStack::initialize_actnorm(const Matrix& x, const Matrix& ctx) {
  if (x.rows() < 16) throw ContractError("initialize_actnorm: batch of at least 16 required");
  require(x.cols() == config_.dim, "initialize_actnorm: event dimension mismatch");
  const Matrix c = broadcast_context(ctx, x.rows());
  Matrix h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (auto* a = std::get_if<ActNorm>(&layers_[i])) a->initialize(h);
    Tape tape;
    Var logdet = zeros_col(tape, h.rows());
    Var ctx_var = tape.constant(c);
    Var in = tape.constant(h);
    std::visit(
        [&](const auto& layer) {
          using T = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<T, Coupling>)
            h = layer.normalize(tape, in, ctx_var, logdet).value();
          else
            h = layer.normalize(tape, in, logdet).value();
        },
        layers_[i]);
  }
}

bool FlowStack::initialized() const {
  for (const auto& l : layers_)
    if (const auto* a = std::get_if<ActNorm>(&l); a && !a->initialized()) return false;
  return true;
}

std::vector<Parameter*> FlowStack::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers_) std::visit([&](auto& layer) { append(out, layer.parameters()); }, l);
  append(out, base_.parameters());
  return out;
}

std::vector<Parameter*> FlowStack::state() {
  std::vector<Parameter*> out = parameters();
  for (auto& l : layers_) {
    if (auto* a = std::get_if<ActNorm>(&l)) append(out, a->buffers());
    if (auto* lin = std::get_if<InvLinear>(&l)) append(out, lin->buffers());
  }
  return out;
}

void FlowStack::validate() const {
  for (const auto& l : layers_)
    if (const auto* lin = std::get_if<InvLinear>(&l)) lin->validate_buffers();
}

Matrix generate_layer(const FlowLayer& layer, const Matrix& u, const Matrix& ctx, Vector& logdet) {
  if (const auto* a = std::get_if<ActNorm>(&layer)) return a->generate(u, logdet);
  if (const auto* l = std::get_if<InvLinear>(&layer)) return l->generate(u, logdet);
  return std::get<Coupling>(layer).generate(u, ctx, logdet);
}

}  // namespace graspflow
