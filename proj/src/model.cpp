#include "pla/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "pla/common.hpp"

namespace pla {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kNormFloor = 1e-12;

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

MatrixXd silu(const MatrixXd& x) {
  return x.unaryExpr([](double v) { return v * sigmoid(v); });
}

MatrixXd silu_grad(const MatrixXd& x) {
  return x.unaryExpr([](double v) {
    const double s = sigmoid(v);
    return s * (1.0 + v * (1.0 - s));
  });
}

MatrixXd affine(const MatrixXd& x, const MatrixXd& w, const MatrixXd& b) {
  MatrixXd y = x * w.transpose();
  y.rowwise() += b.col(0).transpose();
  return y;
}

// Row-wise stable softmax, in place.
void softmax_rows(MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double mx = m.row(i).maxCoeff();
    m.row(i) = (m.row(i).array() - mx).exp().matrix();
    m.row(i) /= m.row(i).sum();
  }
}

VectorXd row_norms(const MatrixXd& m) {
  return m.rowwise().norm().cwiseMax(kNormFloor);
}

// d/dx of x / |x| applied row-wise: (dy - y (y.dy)) / |x|.
MatrixXd normalize_backward(const MatrixXd& y, const VectorXd& norms, const MatrixXd& dy) {
  const VectorXd dots = (y.array() * dy.array()).rowwise().sum();
  MatrixXd dx = dy - (y.array().colwise() * dots.array()).matrix();
  return dx.array().colwise() / norms.array();
}

struct EncoderCache {
  MatrixXd z1, h1;
};

MatrixXd encoder_forward(const MatrixXd& x, const EncoderParams& p, EncoderCache* cache) {
  MatrixXd z1 = affine(x, p.w1, p.b1);
  MatrixXd h1 = silu(z1);
  MatrixXd f = affine(h1, p.w2, p.b2);
  if (cache) *cache = {std::move(z1), std::move(h1)};
  return f;
}

void encoder_backward(const MatrixXd& x, const EncoderParams& p, const EncoderCache& c,
                      const MatrixXd& df, EncoderParams& g) {
  g.w2 += df.transpose() * c.h1;
  g.b2 += df.colwise().sum().transpose();
  const MatrixXd dz1 = ((df * p.w2).array() * silu_grad(c.z1).array()).matrix();
  g.w1 += dz1.transpose() * x;
  g.b1 += dz1.colwise().sum().transpose();
}

struct AdapterCache {
  MatrixXd xhat;
  VectorXd inv_std;
  MatrixXd n1, r;
  VectorXd norms;
  MatrixXd fv;
};

MatrixXd adapter_forward(const MatrixXd& f, const AdapterParams& p, AdapterCache* cache) {
  const MatrixXd a1 = affine(f, p.w1, p.b1);
  const VectorXd mu = a1.rowwise().mean();
  const MatrixXd xc = a1.colwise() - mu;
  const VectorXd var = xc.array().square().rowwise().mean();
  const VectorXd inv_std = (var.array() + kLayerNormEps).rsqrt();
  MatrixXd xhat = xc.array().colwise() * inv_std.array();
  MatrixXd n1 = xhat.array().rowwise() * p.gain.col(0).transpose().array();
  n1.rowwise() += p.shift.col(0).transpose();
  MatrixXd r = silu(n1);
  const MatrixXd o = affine(r, p.w2, p.b2);
  VectorXd norms = row_norms(o);
  MatrixXd fv = o.array().colwise() / norms.array();
  if (cache) *cache = {std::move(xhat), inv_std, std::move(n1), std::move(r), std::move(norms), fv};
  return fv;
}

MatrixXd adapter_backward(const MatrixXd& f, const AdapterParams& p, const AdapterCache& c,
                          const MatrixXd& dfv, AdapterParams& g) {
  const MatrixXd d_o = normalize_backward(c.fv, c.norms, dfv);
  g.w2 += d_o.transpose() * c.r;
  g.b2 += d_o.colwise().sum().transpose();
  const MatrixXd dn1 = ((d_o * p.w2).array() * silu_grad(c.n1).array()).matrix();
  g.gain += (dn1.array() * c.xhat.array()).colwise().sum().transpose().matrix();
  g.shift += dn1.colwise().sum().transpose();
  const MatrixXd dxhat = dn1.array().rowwise() * p.gain.col(0).transpose().array();
  const VectorXd m1 = dxhat.rowwise().mean();
  const VectorXd m2 = (dxhat.array() * c.xhat.array()).rowwise().mean();
  MatrixXd da1 = dxhat;
  da1.colwise() -= m1;
  da1 -= (c.xhat.array().colwise() * m2.array()).matrix();
  da1 = da1.array().colwise() * c.inv_std.array();
  g.w1 += da1.transpose() * f;
  g.b1 += da1.colwise().sum().transpose();
  return da1 * p.w1;
}

std::vector<std::size_t> first_occurrences(const std::vector<std::string>& texts) {
  std::unordered_set<std::string> seen;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < texts.size(); ++i)
    if (seen.insert(texts[i]).second) keep.push_back(i);
  return keep;
}

// Mean cross-entropy of each row against its diagonal column. Fills the
// logit gradient (already divided by n) when requested.
double diagonal_cross_entropy(const MatrixXd& logits, MatrixXd* dlogits) {
  const auto n = logits.rows();
  MatrixXd p = logits;
  softmax_rows(p);
  double loss = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mx = logits.row(i).maxCoeff();
    const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    loss += lse - logits(i, i);
  }
  if (dlogits) {
    *dlogits = p;
    dlogits->diagonal().array() -= 1.0;
    *dlogits /= static_cast<double>(n);
  }
  return loss / static_cast<double>(n);
}

}  // namespace

// --- parameters ------------------------------------------------------------

void ModelDims::validate() const {
  if (hidden < 1 || feature < 1 || adapter_hidden < 2 || embed < 2)
    throw InputError("model dims must be positive (adapter_hidden, embed >= 2)");
}

void ModelParams::for_each(const std::function<void(const std::string&, MatrixXd&)>& f) {
  f("encoder.w1", encoder.w1);
  f("encoder.b1", encoder.b1);
  f("encoder.w2", encoder.w2);
  f("encoder.b2", encoder.b2);
  f("adapter.w1", adapter.w1);
  f("adapter.b1", adapter.b1);
  f("adapter.gain", adapter.gain);
  f("adapter.shift", adapter.shift);
  f("adapter.w2", adapter.w2);
  f("adapter.b2", adapter.b2);
  f("adapter.log_temperature", adapter.log_temperature);
  f("binary.w", binary.w);
  f("binary.b", binary.b);
}

void ModelParams::for_each(
    const std::function<void(const std::string&, const MatrixXd&)>& f) const {
  const_cast<ModelParams*>(this)->for_each(
      [&](const std::string& n, MatrixXd& m) { f(n, m); });
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  z.for_each([](const std::string&, MatrixXd& m) { m.setZero(); });
  return z;
}

double ModelParams::temperature() const { return std::exp(adapter.log_temperature(0, 0)); }

void ModelParams::clamp_temperature() {
  adapter.log_temperature(0, 0) = std::clamp(adapter.log_temperature(0, 0),
                                             std::log(kMinTemperature), std::log(kMaxTemperature));
}

bool ModelParams::all_finite() const {
  bool ok = true;
  for_each([&](const std::string&, const MatrixXd& m) { ok = ok && m.allFinite(); });
  return ok;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const MatrixXd& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

ModelParams init_params(const ModelDims& dims, double tau_init, std::uint64_t seed) {
  dims.validate();
  if (!(tau_init >= kMinTemperature && tau_init <= kMaxTemperature))
    throw InputError("tau_init outside [1e-3, 1e3]");
  std::mt19937_64 rng(seed);
  auto uniform = [&](int rows, int cols) {
    const double bound = std::sqrt(6.0 / static_cast<double>(cols));
    std::uniform_real_distribution<double> u(-bound, bound);
    MatrixXd m(rows, cols);
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = u(rng);
    return m;
  };
  ModelParams p;
  p.encoder.w1 = uniform(dims.hidden, kEncoderInputDim);
  p.encoder.b1 = MatrixXd::Zero(dims.hidden, 1);
  p.encoder.w2 = uniform(dims.feature, dims.hidden);
  p.encoder.b2 = MatrixXd::Zero(dims.feature, 1);
  p.adapter.w1 = uniform(dims.adapter_hidden, dims.feature);
  p.adapter.b1 = MatrixXd::Zero(dims.adapter_hidden, 1);
  p.adapter.gain = MatrixXd::Ones(dims.adapter_hidden, 1);
  p.adapter.shift = MatrixXd::Zero(dims.adapter_hidden, 1);
  p.adapter.w2 = uniform(dims.embed, dims.adapter_hidden);
  p.adapter.b2 = MatrixXd::Zero(dims.embed, 1);
  p.adapter.log_temperature = MatrixXd::Constant(1, 1, std::log(tau_init));
  p.binary.w = uniform(1, dims.feature);
  p.binary.b = MatrixXd::Zero(1, 1);
  return p;
}

// --- forward operations ----------------------------------------------------

MatrixXd encoder_input(const PointCloud& scene, double neighborhood_voxel) {
  const auto n = static_cast<Eigen::Index>(scene.size());
  MatrixXd x(n, kEncoderInputDim);
  x.leftCols<3>() = scene.positions;
  x.middleCols<3>(3) = scene.colors;
  const VoxelIndex index = build_voxel_index(scene.positions, neighborhood_voxel);
  for (const auto& [_, members] : index.cells) {
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(6);
    for (const auto i : members) mean += x.row(i).head<6>();
    mean /= static_cast<double>(members.size());
    for (const auto i : members) x.row(i).tail<6>() = mean;
  }
  return x;
}

MatrixXd encode_input(const MatrixXd& input, const EncoderParams& params) {
  if (input.cols() != kEncoderInputDim) throw InputError("encoder input must have 12 columns");
  return encoder_forward(input, params, nullptr);
}

MatrixXd encode(const PointCloud& scene, const EncoderParams& params, double neighborhood_voxel) {
  return encode_input(encoder_input(scene, neighborhood_voxel), params);
}

MatrixXd adapt(const MatrixXd& features, const AdapterParams& adapter) {
  return adapter_forward(features, adapter, nullptr);
}

VectorXd binary_logits(const MatrixXd& features, const BinaryHeadParams& head) {
  return (features * head.w.transpose()).col(0).array() + head.b(0, 0);
}

void ScoreField::validate(double tol) const {
  if (!probs.allFinite()) throw NumericError("score field has non-finite entries");
  if (probs.size() > 0 && probs.minCoeff() < 0.0) throw NumericError("negative probability");
  for (Eigen::Index i = 0; i < probs.rows(); ++i)
    if (std::abs(probs.row(i).sum() - 1.0) > tol)
      throw NumericError("score row " + std::to_string(i) + " does not sum to 1");
}

std::vector<int> ScoreField::argmax() const {
  std::vector<int> out(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index k = 0;
    probs.row(i).maxCoeff(&k);
    out[static_cast<std::size_t>(i)] = static_cast<int>(k);
  }
  return out;
}

ScoreField semantic_scores(const MatrixXd& features, const AdapterParams& adapter,
                           const MatrixXd& category_rows, double score_temperature) {
  if (!(score_temperature > 0)) throw InputError("score temperature must be positive");
  if (category_rows.cols() != adapter.w2.rows())
    throw InputError("category rows do not match the adapter output dim");
  ScoreField s;
  s.probs = adapt(features, adapter) * category_rows.transpose() / score_temperature;
  softmax_rows(s.probs);
  return s;
}

ScoreField masked_softmax(const MatrixXd& logits, const std::vector<bool>& mask) {
  if (static_cast<Eigen::Index>(mask.size()) != logits.cols())
    throw InputError("masked_softmax: mask length mismatch");
  if (std::none_of(mask.begin(), mask.end(), [](bool b) { return b; }))
    throw InputError("masked_softmax: empty mask");
  ScoreField s;
  s.probs = MatrixXd::Zero(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < logits.cols(); ++k)
      if (mask[static_cast<std::size_t>(k)]) mx = std::max(mx, logits(i, k));
    double sum = 0;
    for (Eigen::Index k = 0; k < logits.cols(); ++k)
      if (mask[static_cast<std::size_t>(k)]) sum += (s.probs(i, k) = std::exp(logits(i, k) - mx));
    s.probs.row(i) /= sum;
  }
  return s;
}

ScoreField calibrate(const ScoreField& scores_base_only, const ScoreField& scores_novel_only,
                     const VectorXd& binary) {
  const auto& b = scores_base_only.probs;
  const auto& n = scores_novel_only.probs;
  if (b.rows() != n.rows() || b.cols() != n.cols() || b.rows() != binary.size())
    throw InputError("calibrate: shape mismatch");
  ScoreField s;
  s.probs = (b.array().colwise() * (1.0 - binary.array())).matrix() +
            (n.array().colwise() * binary.array()).matrix();
  return s;
}

double semantic_loss(const ScoreField& scores, const std::vector<int>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != scores.points())
    throw InputError("semantic_loss: label count mismatch");
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int l = labels[i];
    if (l == kIgnored) continue;
    if (l < 0 || l >= scores.classes())
      throw InputError("semantic_loss: label " + std::to_string(l) + " out of range");
    sum -= std::log(std::max(scores.probs(static_cast<Eigen::Index>(i), l),
                             std::numeric_limits<double>::min()));
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

namespace {

double bce_with_logits(double x, double y) {
  return std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
}

}  // namespace

double binary_loss(const VectorXd& logits, const std::vector<int>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.size())
    throw InputError("binary_loss: label count mismatch");
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y == kIgnored) continue;
    if (y != 0 && y != 1) throw InputError("binary_loss: labels must be 0, 1 or ignored");
    sum += bce_with_logits(logits[static_cast<Eigen::Index>(i)], y);
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

double caption_loss(const std::vector<PooledCaption>& pairs, const TextEncoder& encoder,
                    double temperature) {
  if (!(temperature > 0)) throw InputError("caption_loss: temperature must be positive");
  std::vector<std::string> texts;
  for (const auto& p : pairs) texts.push_back(p.text);
  const auto keep = first_occurrences(texts);
  if (keep.empty()) {
    spdlog::warn("caption_loss: no captions in batch, returning 0");
    return 0.0;
  }
  const auto n = static_cast<Eigen::Index>(keep.size());
  const auto dim = pairs[keep[0]].feature.size();
  MatrixXd pooled(n, dim), text(n, encoder.dim());
  for (Eigen::Index i = 0; i < n; ++i) {
    pooled.row(i) = pairs[keep[static_cast<std::size_t>(i)]].feature.transpose();
    text.row(i) = encoder.embed(pairs[keep[static_cast<std::size_t>(i)]].text).transpose();
  }
  return diagonal_cross_entropy(pooled * text.transpose() / temperature, nullptr);
}

void LossWeights::validate() const {
  for (const double a : alpha)
    if (!(a >= 0.0) || !std::isfinite(a)) throw InputError("caption loss weights must be >= 0");
}

double total_loss(const LossComponents& c, const LossWeights& w) {
  w.validate();
  return c.sem + w.alpha[0] * c.cap[0] + w.alpha[1] * c.cap[1] + w.alpha[2] * c.cap[2] + c.bi;
}

// --- caption sets ----------------------------------------------------------

CaptionSet CaptionSet::subset(const std::vector<std::size_t>& keep) const {
  CaptionSet out;
  out.embeddings.resize(static_cast<Eigen::Index>(keep.size()), embeddings.cols());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    out.points.push_back(points[keep[r]]);
    out.texts.push_back(texts[keep[r]]);
    out.embeddings.row(static_cast<Eigen::Index>(r)) =
        embeddings.row(static_cast<Eigen::Index>(keep[r]));
  }
  return out;
}

CaptionSet CaptionSet::deduplicated() const { return subset(first_occurrences(texts)); }

// --- joint forward/backward ------------------------------------------------

LossBreakdown forward_backward(const ModelParams& params, const TrainingExample& ex,
                               const MatrixXd& category_rows, const LossWeights& weights,
                               double score_temperature, ModelParams* grad) {
  weights.validate();
  const auto n = ex.input.rows();
  if (static_cast<Eigen::Index>(ex.sem_labels.size()) != n ||
      static_cast<Eigen::Index>(ex.binary_labels.size()) != n)
    throw InputError("scene " + ex.scene_id + ": label count mismatch");

  EncoderCache enc_cache;
  const MatrixXd f = encoder_forward(ex.input, params.encoder, grad ? &enc_cache : nullptr);
  AdapterCache ad_cache;
  const MatrixXd fv = adapter_forward(f, params.adapter, &ad_cache);

  LossBreakdown out;
  MatrixXd dfv;
  MatrixXd df;
  if (grad) {
    *grad = params.zeros_like();
    dfv = MatrixXd::Zero(fv.rows(), fv.cols());
    df = MatrixXd::Zero(f.rows(), f.cols());
  }

  // semantic cross-entropy over training categories
  {
    MatrixXd logits = fv * category_rows.transpose() / score_temperature;
    MatrixXd p = logits;
    softmax_rows(p);
    std::size_t valid = 0;
    for (const int l : ex.sem_labels) valid += l != kIgnored;
    double sum = 0;
    MatrixXd dlogits;
    if (grad) dlogits = MatrixXd::Zero(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      const int l = ex.sem_labels[static_cast<std::size_t>(i)];
      if (l == kIgnored) continue;
      if (l < 0 || l >= logits.cols())
        throw InputError("scene " + ex.scene_id + ": training label out of range");
      const double mx = logits.row(i).maxCoeff();
      sum += mx + std::log((logits.row(i).array() - mx).exp().sum()) - logits(i, l);
      if (grad) {
        dlogits.row(i) = p.row(i) / static_cast<double>(valid);
        dlogits(i, l) -= 1.0 / static_cast<double>(valid);
      }
    }
    out.parts.sem = valid ? sum / static_cast<double>(valid) : 0.0;
    if (grad && valid) dfv += dlogits * category_rows / score_temperature;
  }

  // binary head
  {
    const VectorXd logits = binary_logits(f, params.binary);
    std::size_t valid = 0;
    for (const int y : ex.binary_labels) valid += y != kIgnored;
    double sum = 0;
    VectorXd dlogit = VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int y = ex.binary_labels[static_cast<std::size_t>(i)];
      if (y == kIgnored) continue;
      sum += bce_with_logits(logits[i], y);
      dlogit[i] = (sigmoid(logits[i]) - y) / static_cast<double>(valid);
    }
    out.parts.bi = valid ? sum / static_cast<double>(valid) : 0.0;
    if (grad && valid) {
      grad->binary.w += dlogit.transpose() * f;
      grad->binary.b(0, 0) += dlogit.sum();
      df += dlogit * params.binary.w;
    }
  }

  // caption contrastive losses
  const double tau = params.temperature();
  double dtau = 0;
  for (std::size_t level = 0; level < 3; ++level) {
    const CaptionSet& cs = ex.captions[level];
    const auto keep = first_occurrences(cs.texts);
    out.caption_count[level] = keep.size();
    if (keep.empty()) continue;
    const auto m = static_cast<Eigen::Index>(keep.size());
    MatrixXd pooled = MatrixXd::Zero(m, fv.cols());
    MatrixXd text(m, cs.embeddings.cols());
    for (Eigen::Index r = 0; r < m; ++r) {
      const auto& idx = cs.points[keep[static_cast<std::size_t>(r)]];
      if (idx.empty()) throw InputError("scene " + ex.scene_id + ": caption pair without points");
      for (const auto i : idx) {
        if (static_cast<Eigen::Index>(i) >= n)
          throw InputError("scene " + ex.scene_id + ": caption index out of range");
        pooled.row(r) += fv.row(i);
      }
      pooled.row(r) /= static_cast<double>(idx.size());
      text.row(r) = cs.embeddings.row(static_cast<Eigen::Index>(keep[static_cast<std::size_t>(r)]));
    }
    const VectorXd pnorm = row_norms(pooled);
    const MatrixXd pn = pooled.array().colwise() / pnorm.array();
    const MatrixXd logits = pn * text.transpose() / tau;
    MatrixXd dlogits;
    out.parts.cap[level] = diagonal_cross_entropy(logits, grad ? &dlogits : nullptr);
    const double a = weights.alpha[level];
    if (!grad || a == 0.0) continue;
    dlogits *= a;
    dtau -= (dlogits.array() * logits.array()).sum() / tau;
    const MatrixXd dpooled = normalize_backward(pn, pnorm, dlogits * text / tau);
    for (Eigen::Index r = 0; r < m; ++r) {
      const auto& idx = cs.points[keep[static_cast<std::size_t>(r)]];
      const Eigen::RowVectorXd share = dpooled.row(r) / static_cast<double>(idx.size());
      for (const auto i : idx) dfv.row(i) += share;
    }
  }

  out.total = total_loss(out.parts, weights);
  if (grad) {
    grad->adapter.log_temperature(0, 0) = dtau * tau;
    df += adapter_backward(f, params.adapter, ad_cache, dfv, grad->adapter);
    encoder_backward(ex.input, params.encoder, enc_cache, df, grad->encoder);
  }
  return out;
}

// --- inference -------------------------------------------------------------

Prediction predict(const ModelParams& params, const MatrixXd& input, const MatrixXd& all_rows,
                   const std::vector<bool>& base_mask, double score_temperature,
                   bool use_calibration) {
  if (static_cast<Eigen::Index>(base_mask.size()) != all_rows.rows())
    throw InputError("predict: base mask length differs from category rows");
  const MatrixXd f = encode_input(input, params.encoder);
  const MatrixXd fv = adapt(f, params.adapter);
  const MatrixXd logits = fv * all_rows.transpose() / score_temperature;
  Prediction out;
  out.novel_prob = binary_logits(f, params.binary).unaryExpr([](double x) { return sigmoid(x); });
  std::vector<bool> novel_mask(base_mask.size());
  std::transform(base_mask.begin(), base_mask.end(), novel_mask.begin(), [](bool b) { return !b; });
  const bool any_novel = std::any_of(novel_mask.begin(), novel_mask.end(), [](bool b) { return b; });
  if (use_calibration && any_novel) {
    out.scores = calibrate(masked_softmax(logits, base_mask), masked_softmax(logits, novel_mask),
                           out.novel_prob);
  } else {
    out.scores.probs = logits;
    softmax_rows(out.scores.probs);
  }
  out.labels = out.scores.argmax();
  return out;
}

}  // namespace pla
