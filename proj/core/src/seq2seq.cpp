#include "kernelsmith/seq2seq.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "kernelsmith/error.hpp"
#include "kernelsmith/random.hpp"

namespace ks {
namespace {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr char kMagic[4] = {'K', 'S', 'M', 'D'};
constexpr std::uint32_t kCheckpointVersion = 1;

Vector sigmoid(const Vector& x) {
  return (1.0 + (-x.array()).exp()).inverse().matrix();
}

Vector tanh_vec(const Vector& x) { return x.array().tanh().matrix(); }

double log_sum_exp(const Vector& x) {
  const double m = x.maxCoeff();
  if (m == kNegInf) return kNegInf;
  return m + std::log((x.array() - m).exp().sum());
}

// Views of one GRU layer inside a flat parameter (or gradient) buffer.
template <typename MapT>
struct GruView {
  MapT W;
  MapT U;
  MapT b;
};

template <typename MapT, typename Buffer>
MapT view(Buffer* data, const ParamBlock& block) {
  return MapT(data + block.offset, static_cast<Eigen::Index>(block.rows),
              static_cast<Eigen::Index>(block.cols));
}

struct GruCache {
  Vector x;
  Vector h_prev;
  Vector z;
  Vector r;
  Vector cand;
  Vector h;
};

template <typename MapT>
void gru_forward(const GruView<MapT>& g, const Vector& x, const Vector& h_prev, GruCache& c) {
  const Eigen::Index H = h_prev.size();
  const Vector gx = g.W * x + g.b;
  c.x = x;
  c.h_prev = h_prev;
  c.z = sigmoid(gx.segment(0, H) + g.U.block(0, 0, H, H) * h_prev);
  c.r = sigmoid(gx.segment(H, H) + g.U.block(H, 0, H, H) * h_prev);
  const Vector rh = c.r.cwiseProduct(h_prev);
  c.cand = tanh_vec(gx.segment(2 * H, H) + g.U.block(2 * H, 0, H, H) * rh);
  c.h = (Vector::Ones(H) - c.z).cwiseProduct(h_prev) + c.z.cwiseProduct(c.cand);
}

template <typename MapT>
Vector gru_step(const GruView<MapT>& g, const Vector& x, const Vector& h_prev) {
  GruCache c;
  gru_forward(g, x, h_prev, c);
  return c.h;
}

// Backward through one GRU application. Accumulates parameter gradients
// and returns d/dx; *dh_prev receives d/dh_prev.
Vector gru_backward(const GruView<ConstMatrixMap>& g, GruView<MatrixMap>& dg, const GruCache& c,
                    const Vector& dh, Vector* dh_prev) {
  const Eigen::Index H = dh.size();
  const Vector ones = Vector::Ones(H);
  const Vector dz = dh.cwiseProduct(c.cand - c.h_prev);
  const Vector dcand = dh.cwiseProduct(c.z);
  *dh_prev = dh.cwiseProduct(ones - c.z);

  const Vector da_c = dcand.cwiseProduct(ones - c.cand.cwiseProduct(c.cand));
  const Vector rh = c.r.cwiseProduct(c.h_prev);
  const Vector drh = g.U.block(2 * H, 0, H, H).transpose() * da_c;
  const Vector dr = drh.cwiseProduct(c.h_prev);
  *dh_prev += drh.cwiseProduct(c.r);

  Vector da(3 * H);
  da.segment(0, H) = dz.cwiseProduct(c.z).cwiseProduct(ones - c.z);
  da.segment(H, H) = dr.cwiseProduct(c.r).cwiseProduct(ones - c.r);
  da.segment(2 * H, H) = da_c;

  dg.W.noalias() += da * c.x.transpose();
  dg.b += da;
  dg.U.block(0, 0, 2 * H, H).noalias() += da.segment(0, 2 * H) * c.h_prev.transpose();
  dg.U.block(2 * H, 0, H, H).noalias() += da_c * rh.transpose();
  *dh_prev += g.U.block(0, 0, 2 * H, H).transpose() * da.segment(0, 2 * H);
  return g.W.transpose() * da;
}

Vector dropout_mask(Rng& rng, Eigen::Index n, double p) {
  Vector mask = Vector::Ones(n);
  if (p <= 0.0) return mask;
  const double keep = 1.0 - p;
  for (Eigen::Index i = 0; i < n; ++i) mask[i] = rng.uniform() < p ? 0.0 : 1.0 / keep;
  return mask;
}

// Read-only views of a full model.
struct ModelView {
  ConstMatrixMap emb;
  std::vector<GruView<ConstMatrixMap>> enc;
  std::vector<GruView<ConstMatrixMap>> dec;
  ConstMatrixMap att_W, att_U, att_v;
  ConstMatrixMap comb_W, comb_b;
  ConstMatrixMap out_W, out_b;
};

struct GradView {
  MatrixMap emb;
  std::vector<GruView<MatrixMap>> enc;
  std::vector<GruView<MatrixMap>> dec;
  MatrixMap att_W, att_U, att_v;
  MatrixMap comb_W, comb_b;
  MatrixMap out_W, out_b;
};

template <typename MapT, typename Buffer, typename ViewT>
ViewT make_view(const ParamLayout& layout, std::size_t layers, Buffer* data) {
  auto b = [&](const std::string& name) { return view<MapT>(data, layout.block(name)); };
  ViewT v{b("embedding"), {}, {}, b("attention.W"), b("attention.U"), b("attention.v"),
          b("combine.W"), b("combine.b"), b("output.W"), b("output.b")};
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string e = "encoder." + std::to_string(l);
    const std::string d = "decoder." + std::to_string(l);
    v.enc.push_back({b(e + ".W"), b(e + ".U"), b(e + ".b")});
    v.dec.push_back({b(d + ".W"), b(d + ".U"), b(d + ".b")});
  }
  return v;
}

ModelView model_view(const ExpansionModel& m) {
  return make_view<ConstMatrixMap, const double, ModelView>(m.layout(), m.dims().layers,
                                                           m.params().data());
}

GradView grad_view(const ExpansionModel& m, std::vector<double>& grad) {
  return make_view<MatrixMap, double, GradView>(m.layout(), m.dims().layers, grad.data());
}

struct AttentionOut {
  Matrix A;       // tanh(keys + q)
  Vector alpha;
  Vector context;
  Vector o;       // attentional vector
  Vector logits;
};

AttentionOut attend_and_project(const ModelView& v, const Matrix& states, const Matrix& keys,
                                const Vector& s, const Vector* o_mask) {
  AttentionOut a;
  const Vector q = v.att_W * s;
  a.A = (keys.colwise() + q).array().tanh().matrix();
  Vector e = a.A.transpose() * v.att_v.col(0);
  e.array() -= e.maxCoeff();
  a.alpha = e.array().exp().matrix();
  a.alpha /= a.alpha.sum();
  a.context = states * a.alpha;
  const Eigen::Index H = s.size();
  Vector sc(2 * H);
  sc << s, a.context;
  a.o = tanh_vec(v.comb_W * sc + v.comb_b.col(0));
  if (o_mask != nullptr) {
    a.logits = v.out_W * a.o.cwiseProduct(*o_mask) + v.out_b.col(0);
  } else {
    a.logits = v.out_W * a.o + v.out_b.col(0);
  }
  return a;
}

void check_id(const ExpansionModel& m, TokenId id) {
  if (id < 0 || static_cast<std::size_t>(id) >= m.dims().vocab) {
    throw Error(ErrorCode::kInvalidArgument, "token id out of range for model");
  }
}

}  // namespace

// ---------------------------------------------------------------------------

ParamLayout::ParamLayout(const ModelDims& d) {
  auto add = [&](std::string name, std::size_t rows, std::size_t cols) {
    blocks_.push_back({std::move(name), rows, cols, total_});
    total_ += rows * cols;
  };
  const std::size_t H = d.hidden;
  add("embedding", d.embed, d.vocab);
  for (std::size_t l = 0; l < d.layers; ++l) {
    const std::string p = "encoder." + std::to_string(l);
    add(p + ".W", 3 * H, l == 0 ? d.embed : H);
    add(p + ".U", 3 * H, H);
    add(p + ".b", 3 * H, 1);
  }
  for (std::size_t l = 0; l < d.layers; ++l) {
    const std::string p = "decoder." + std::to_string(l);
    add(p + ".W", 3 * H, l == 0 ? d.embed + H : H);
    add(p + ".U", 3 * H, H);
    add(p + ".b", 3 * H, 1);
  }
  add("attention.W", H, H);
  add("attention.U", H, H);
  add("attention.v", H, 1);
  add("combine.W", H, 2 * H);
  add("combine.b", H, 1);
  add("output.W", d.vocab, H);
  add("output.b", d.vocab, 1);
}

const ParamBlock& ParamLayout::block(const std::string& name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return b;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown parameter block " + name);
}

ExpansionModel::ExpansionModel(const ModelDims& dims, Vocab vocab)
    : dims_(dims), vocab_(std::move(vocab)), layout_(dims), params_(layout_.total(), 0.0) {
  if (dims_.vocab != vocab_.size()) {
    throw Error(ErrorCode::kShapeError, "model vocab dimension does not match vocabulary");
  }
  if (dims_.embed == 0 || dims_.hidden == 0 || dims_.layers == 0) {
    throw Error(ErrorCode::kShapeError, "model dimensions must be positive");
  }
}

void ExpansionModel::initialize(std::uint64_t seed, double scale) {
  Rng rng(seed);
  for (const auto& b : layout_.blocks()) {
    const bool bias = b.cols == 1 && b.name != "attention.v";
    for (std::size_t i = 0; i < b.size(); ++i) {
      params_[b.offset + i] = bias ? 0.0 : rng.uniform(-scale, scale);
    }
  }
}

ExpansionModel::ConstMatrixMap ExpansionModel::param(const std::string& name) const {
  return view<ConstMatrixMap>(params_.data(), layout_.block(name));
}

ExpansionModel::MatrixMap ExpansionModel::param(const std::string& name) {
  return view<MatrixMap>(params_.data(), layout_.block(name));
}

bool ExpansionModel::all_finite() const {
  return std::all_of(params_.begin(), params_.end(), [](double x) { return std::isfinite(x); });
}

// ---------------------------------------------------------------------------

void FocusedLossConfig::validate() const {
  if (!(lambda >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "lambda must be nonnegative");
}

std::vector<double> focus_weights(const std::vector<std::string>& target_tokens,
                                  const std::vector<std::string>& source_tokens, double lambda) {
  const std::unordered_set<std::string> source(source_tokens.begin(), source_tokens.end());
  std::vector<double> w;
  w.reserve(target_tokens.size());
  for (const auto& t : target_tokens) {
    const bool novel = t != Vocab::kEosToken && !source.contains(t);
    w.push_back(1.0 + lambda * (novel ? 1.0 : 0.0));
  }
  return w;
}

FocusedLoss focused_loss(std::span<const double> gold_log_probs,
                         const std::vector<std::string>& target_tokens,
                         const std::vector<std::string>& source_tokens,
                         const FocusedLossConfig& config) {
  config.validate();
  if (gold_log_probs.size() != target_tokens.size()) {
    throw Error(ErrorCode::kShapeError, "one gold log-probability per target position required");
  }
  FocusedLoss out;
  out.weights = focus_weights(target_tokens, source_tokens, config.lambda);
  for (std::size_t t = 0; t < gold_log_probs.size(); ++t) {
    out.loss -= out.weights[t] * gold_log_probs[t];
  }
  return out;
}

double negative_log_likelihood(std::span<const double> gold_log_probs) {
  double loss = 0.0;
  for (double lp : gold_log_probs) loss -= lp;
  return loss;
}

// ---------------------------------------------------------------------------

std::pair<std::shared_ptr<const EncoderMemory>, DecoderState> encode(
    const ExpansionModel& model, std::span<const TokenId> kernel) {
  if (kernel.empty()) throw Error(ErrorCode::kEmptyInput, "cannot encode an empty input");
  const ModelView v = model_view(model);
  const auto& d = model.dims();
  const auto H = static_cast<Eigen::Index>(d.hidden);
  const auto n = static_cast<Eigen::Index>(kernel.size());

  auto memory = std::make_shared<EncoderMemory>();
  std::vector<Vector> h(d.layers, Vector::Zero(H));
  memory->states.resize(H, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    check_id(model, kernel[static_cast<std::size_t>(i)]);
    Vector x = v.emb.col(kernel[static_cast<std::size_t>(i)]);
    for (std::size_t l = 0; l < d.layers; ++l) {
      h[l] = gru_step(v.enc[l], x, h[l]);
      x = h[l];
    }
    memory->states.col(i) = h.back();
  }
  memory->keys = v.att_U * memory->states;
  memory->final_hidden = h;

  DecoderState state;
  state.hidden = h;
  state.feed = Vector::Zero(H);
  state.attention = Vector::Zero(n);
  return {std::move(memory), std::move(state)};
}

std::pair<Eigen::VectorXd, DecoderState> decoder_step(const ExpansionModel& model,
                                                      const EncoderMemory& memory,
                                                      const DecoderState& state, TokenId prev) {
  check_id(model, prev);
  const ModelView v = model_view(model);
  const auto& d = model.dims();
  const auto E = static_cast<Eigen::Index>(d.embed);
  const auto H = static_cast<Eigen::Index>(d.hidden);

  DecoderState next;
  Vector x(E + H);
  x << v.emb.col(prev), state.feed;
  next.hidden.resize(d.layers);
  for (std::size_t l = 0; l < d.layers; ++l) {
    next.hidden[l] = gru_step(v.dec[l], x, state.hidden[l]);
    x = next.hidden[l];
  }
  AttentionOut a = attend_and_project(v, memory.states, memory.keys, next.hidden.back(), nullptr);
  next.feed = a.o;
  next.attention = a.alpha;

  Vector logits = a.logits;
  logits[Vocab::kPad] = kNegInf;
  logits[Vocab::kUnk] = kNegInf;
  logits[Vocab::kBos] = kNegInf;
  logits.array() -= log_sum_exp(logits);
  return {std::move(logits), std::move(next)};
}

// ---------------------------------------------------------------------------

EncodedPair encode_pair(const Vocab& vocab, const SentencePair& pair, double lambda) {
  EncodedPair e;
  e.source = vocab.encode(pair.kernel.tokens);
  e.target = vocab.encode(pair.original.tokens);
  e.target.push_back(Vocab::kEos);
  std::vector<std::string> target_tokens = pair.original.tokens;
  target_tokens.emplace_back(Vocab::kEosToken);
  e.weights = focus_weights(target_tokens, pair.kernel.tokens, lambda);
  return e;
}

namespace {

struct StepCache {
  std::vector<GruCache> layers;
  Vector sc;
  AttentionOut att;
  Vector emb_mask;
  Vector o_mask;
};

// Shared forward pass for loss, gradient and gold log-probs.
struct Forward {
  std::vector<std::vector<GruCache>> enc;  // [layer][position]
  std::vector<Vector> enc_masks;
  Matrix states;
  Matrix keys;
  std::vector<StepCache> steps;
  std::vector<double> gold_lp;
};

Forward run_forward(const ExpansionModel& model, const ModelView& v, const EncodedPair& pair,
                    double dropout, std::uint64_t dropout_seed) {
  const auto& d = model.dims();
  const auto E = static_cast<Eigen::Index>(d.embed);
  const auto H = static_cast<Eigen::Index>(d.hidden);
  const std::size_t n = pair.source.size();
  const std::size_t T = pair.target.size();
  if (n == 0) throw Error(ErrorCode::kEmptyInput, "empty source sequence");
  Rng rng(dropout_seed);

  Forward f;
  f.enc.assign(d.layers, std::vector<GruCache>(n));
  f.states.resize(H, static_cast<Eigen::Index>(n));
  std::vector<Vector> h(d.layers, Vector::Zero(H));
  for (std::size_t i = 0; i < n; ++i) {
    check_id(model, pair.source[i]);
    f.enc_masks.push_back(dropout_mask(rng, E, dropout));
    Vector x = v.emb.col(pair.source[i]).cwiseProduct(f.enc_masks.back());
    for (std::size_t l = 0; l < d.layers; ++l) {
      gru_forward(v.enc[l], x, h[l], f.enc[l][i]);
      h[l] = f.enc[l][i].h;
      x = h[l];
    }
    f.states.col(static_cast<Eigen::Index>(i)) = h.back();
  }
  f.keys = v.att_U * f.states;

  Vector feed = Vector::Zero(H);
  f.steps.resize(T);
  f.gold_lp.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    const TokenId in = t == 0 ? Vocab::kBos : pair.target[t - 1];
    check_id(model, in);
    check_id(model, pair.target[t]);
    StepCache& sc = f.steps[t];
    sc.emb_mask = dropout_mask(rng, E, dropout);
    sc.o_mask = dropout_mask(rng, H, dropout);
    Vector x(E + H);
    x << v.emb.col(in).cwiseProduct(sc.emb_mask), feed;
    sc.layers.resize(d.layers);
    for (std::size_t l = 0; l < d.layers; ++l) {
      gru_forward(v.dec[l], x, h[l], sc.layers[l]);
      h[l] = sc.layers[l].h;
      x = h[l];
    }
    sc.att = attend_and_project(v, f.states, f.keys, h.back(), &sc.o_mask);
    sc.sc.resize(2 * H);
    sc.sc << h.back(), sc.att.context;
    feed = sc.att.o;
    f.gold_lp[t] = sc.att.logits[pair.target[t]] - log_sum_exp(sc.att.logits);
  }
  return f;
}

}  // namespace

std::vector<double> gold_log_probs(const ExpansionModel& model, const EncodedPair& pair) {
  return run_forward(model, model_view(model), pair, 0.0, 0).gold_lp;
}

double pair_loss(const ExpansionModel& model, const EncodedPair& pair, std::vector<double>* gradient,
                 double dropout, std::uint64_t dropout_seed) {
  if (pair.weights.size() != pair.target.size()) {
    throw Error(ErrorCode::kShapeError, "weights must match target length");
  }
  const ModelView v = model_view(model);
  Forward f = run_forward(model, v, pair, dropout, dropout_seed);
  double loss = 0.0;
  for (std::size_t t = 0; t < f.gold_lp.size(); ++t) loss -= pair.weights[t] * f.gold_lp[t];
  if (gradient == nullptr) return loss;
  if (gradient->size() != model.params().size()) {
    throw Error(ErrorCode::kShapeError, "gradient buffer has wrong size");
  }

  const auto& d = model.dims();
  const auto E = static_cast<Eigen::Index>(d.embed);
  const auto H = static_cast<Eigen::Index>(d.hidden);
  const std::size_t L = d.layers;
  const std::size_t n = pair.source.size();
  const std::size_t T = pair.target.size();
  GradView g = grad_view(model, *gradient);

  Matrix d_states = Matrix::Zero(H, static_cast<Eigen::Index>(n));
  Matrix d_keys = Matrix::Zero(H, static_cast<Eigen::Index>(n));
  std::vector<Vector> dh_next(L, Vector::Zero(H));
  Vector dfeed_next = Vector::Zero(H);

  for (std::size_t t = T; t-- > 0;) {
    const StepCache& sc = f.steps[t];
    const AttentionOut& a = sc.att;
    const TokenId in = t == 0 ? Vocab::kBos : pair.target[t - 1];
    const double w = pair.weights[t];

    Vector dlogits = (a.logits.array() - log_sum_exp(a.logits)).exp().matrix() * w;
    dlogits[pair.target[t]] -= w;
    const Vector od = a.o.cwiseProduct(sc.o_mask);
    g.out_W.noalias() += dlogits * od.transpose();
    g.out_b.col(0) += dlogits;
    Vector d_o = (v.out_W.transpose() * dlogits).cwiseProduct(sc.o_mask) + dfeed_next;

    const Vector dpre = d_o.cwiseProduct(Vector::Ones(H) - a.o.cwiseProduct(a.o));
    g.comb_W.noalias() += dpre * sc.sc.transpose();
    g.comb_b.col(0) += dpre;
    const Vector dsc = v.comb_W.transpose() * dpre;
    Vector ds = dsc.head(H);
    const Vector dc = dsc.tail(H);

    const Vector dalpha = f.states.transpose() * dc;
    d_states.noalias() += dc * a.alpha.transpose();
    const Vector de = a.alpha.cwiseProduct((dalpha.array() - a.alpha.dot(dalpha)).matrix());
    g.att_v.col(0) += a.A * de;
    const Matrix dpreA =
        (v.att_v.col(0) * de.transpose()).cwiseProduct((1.0 - a.A.array().square()).matrix());
    const Vector dq = dpreA.rowwise().sum();
    d_keys += dpreA;
    const Vector& s = sc.layers.back().h;
    g.att_W.noalias() += dq * s.transpose();
    ds += v.att_W.transpose() * dq;

    Vector from_above = ds;
    for (std::size_t l = L; l-- > 0;) {
      const Vector dh = from_above + dh_next[l];
      Vector dh_prev;
      Vector dx = gru_backward(v.dec[l], g.dec[l], sc.layers[l], dh, &dh_prev);
      dh_next[l] = dh_prev;
      if (l > 0) {
        from_above = dx;
      } else {
        g.emb.col(in) += dx.head(E).cwiseProduct(sc.emb_mask);
        dfeed_next = dx.tail(H);
      }
    }
  }

  g.att_U.noalias() += d_keys * f.states.transpose();
  d_states.noalias() += v.att_U.transpose() * d_keys;

  // Encoder: top layer receives attention gradients; every layer's final
  // state also seeded the decoder.
  std::vector<Vector> d_out(n, Vector::Zero(H));
  for (std::size_t i = 0; i < n; ++i) d_out[i] = d_states.col(static_cast<Eigen::Index>(i));
  for (std::size_t l = L; l-- > 0;) {
    Vector dh_rec = dh_next[l];
    std::vector<Vector> d_below(n);
    for (std::size_t i = n; i-- > 0;) {
      const Vector dh = d_out[i] + dh_rec;
      Vector dh_prev;
      Vector dx = gru_backward(v.enc[l], g.enc[l], f.enc[l][i], dh, &dh_prev);
      dh_rec = dh_prev;
      if (l > 0) {
        d_below[i] = dx;
      } else {
        g.emb.col(pair.source[i]) += dx.cwiseProduct(f.enc_masks[i]);
      }
    }
    if (l > 0) d_out = std::move(d_below);
  }
  return loss;
}

// ---------------------------------------------------------------------------

TrainResult train(const std::vector<SentencePair>& pairs, const Vocab& vocab, const ModelDims& dims_in,
                  const FocusedLossConfig& loss_config, const TrainConfig& cfg) {
  loss_config.validate();
  if (pairs.empty()) throw Error(ErrorCode::kEmptyDataset, "no training pairs");
  if (cfg.batch_size == 0) throw Error(ErrorCode::kInvalidArgument, "batch size must be positive");
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) {
    throw Error(ErrorCode::kInvalidArgument, "dropout must be in [0, 1)");
  }
  ModelDims dims = dims_in;
  dims.vocab = vocab.size();
  TrainResult result{ExpansionModel(dims, vocab), {}};
  ExpansionModel& model = result.model;
  model.initialize(cfg.seed, cfg.init_scale);

  std::vector<EncodedPair> encoded;
  encoded.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.kernel.empty() || p.original.empty()) {
      throw Error(ErrorCode::kEmptyInput, "training pair with an empty side");
    }
    encoded.push_back(encode_pair(vocab, p, loss_config.lambda));
  }

  Rng rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<std::size_t> order(encoded.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(std::span<std::size_t>(order));
  std::size_t cursor = 0;

  const std::size_t P = model.params().size();
  std::vector<double> grad(P), m(P, 0.0), s(P, 0.0);
  double interval_loss = 0.0;
  std::size_t interval_count = 0;

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double batch_loss = 0.0;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {
        rng.shuffle(std::span<std::size_t>(order));
        cursor = 0;
      }
      const EncodedPair& ep = encoded[order[cursor++]];
      const double scale = 1.0 / (static_cast<double>(cfg.batch_size) * static_cast<double>(ep.target.size()));
      std::vector<double> pair_grad(P, 0.0);
      const double l = pair_loss(model, ep, &pair_grad, cfg.dropout, rng.next());
      for (std::size_t i = 0; i < P; ++i) grad[i] += scale * pair_grad[i];
      batch_loss += l / static_cast<double>(ep.target.size());
    }
    batch_loss /= static_cast<double>(cfg.batch_size);

    double norm = 0.0;
    for (double x : grad) norm += x * x;
    norm = std::sqrt(norm);
    if (cfg.clip_norm > 0.0 && norm > cfg.clip_norm) {
      const double k = cfg.clip_norm / norm;
      for (double& x : grad) x *= k;
    }

    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
    auto& params = model.params();
    for (std::size_t i = 0; i < P; ++i) {
      m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * grad[i];
      s[i] = cfg.adam_beta2 * s[i] + (1.0 - cfg.adam_beta2) * grad[i] * grad[i];
      params[i] -= cfg.learning_rate * (m[i] / bc1) / (std::sqrt(s[i] / bc2) + cfg.adam_epsilon);
    }

    interval_loss += batch_loss;
    ++interval_count;
    if ((cfg.log_every > 0 && step % cfg.log_every == 0) || step == cfg.steps || step == 1) {
      result.loss_history.emplace_back(step, interval_loss / static_cast<double>(interval_count));
      interval_loss = 0.0;
      interval_count = 0;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) throw Error(ErrorCode::kParseError, "checkpoint truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

void save_checkpoint(const ExpansionModel& model, const std::string& path,
                     const FocusedLossConfig& loss_config, const TrainConfig& train_config) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  const auto& d = model.dims();
  out.write(kMagic, 4);
  write_le<std::uint32_t>(out, kCheckpointVersion);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(d.vocab));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(d.embed));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(d.hidden));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(d.layers));
  write_le<std::uint64_t>(out, static_cast<std::uint64_t>(model.params().size()));
  for (double p : model.params()) write_le<float>(out, static_cast<float>(p));
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + path);

  nlohmann::json side;
  side["format_version"] = kCheckpointVersion;
  side["dims"] = {{"vocab", d.vocab}, {"embed", d.embed}, {"hidden", d.hidden}, {"layers", d.layers}};
  side["vocab"] = model.vocab().tokens();
  side["loss"] = {{"lambda", loss_config.lambda}};
  side["train"] = {{"steps", train_config.steps},
                   {"learning_rate", train_config.learning_rate},
                   {"dropout", train_config.dropout},
                   {"batch_size", train_config.batch_size},
                   {"seed", train_config.seed},
                   {"clip_norm", train_config.clip_norm},
                   {"adam_beta1", train_config.adam_beta1},
                   {"adam_beta2", train_config.adam_beta2},
                   {"adam_epsilon", train_config.adam_epsilon}};
  std::ofstream js(path + ".json");
  if (!js) throw Error(ErrorCode::kIoError, "cannot write " + path + ".json");
  js << side.dump(2) << '\n';
}

ExpansionModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw Error(ErrorCode::kParseError, path + " is not a kernelsmith checkpoint");
  }
  const auto version = read_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::kParseError, "unsupported checkpoint version " + std::to_string(version));
  }
  ModelDims d;
  d.vocab = read_le<std::uint32_t>(in);
  d.embed = read_le<std::uint32_t>(in);
  d.hidden = read_le<std::uint32_t>(in);
  d.layers = read_le<std::uint32_t>(in);
  const auto count = read_le<std::uint64_t>(in);

  std::ifstream js(path + ".json");
  if (!js) throw Error(ErrorCode::kIoError, "missing sidecar " + path + ".json");
  nlohmann::json side;
  try {
    js >> side;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("bad checkpoint sidecar: ") + e.what());
  }
  Vocab vocab = Vocab::from_tokens(side.at("vocab").get<std::vector<std::string>>());
  ExpansionModel model(d, std::move(vocab));
  if (count != model.params().size()) {
    throw Error(ErrorCode::kShapeError, "checkpoint parameter count does not match dimensions");
  }
  for (auto& p : model.params()) p = static_cast<double>(read_le<float>(in));
  return model;
}

// ---------------------------------------------------------------------------

namespace {

struct Seq2SeqState final : StepState {
  std::shared_ptr<const EncoderMemory> memory;
  DecoderState decoder;
};

}  // namespace

StatePtr Seq2SeqStepModel::start(std::span<const TokenId> input) const {
  auto [memory, decoder] = encode(*model_, input);
  auto s = std::make_shared<Seq2SeqState>();
  s->memory = std::move(memory);
  s->decoder = std::move(decoder);
  return s;
}

StepOutput Seq2SeqStepModel::step(const StepState& state, TokenId prev) const {
  const auto& s = static_cast<const Seq2SeqState&>(state);
  auto [logp, next] = decoder_step(*model_, *s.memory, s.decoder, prev);
  auto ns = std::make_shared<Seq2SeqState>();
  ns->memory = s.memory;
  ns->decoder = std::move(next);
  StepOutput out;
  out.log_probs.assign(logp.data(), logp.data() + logp.size());
  out.next = std::move(ns);
  return out;
}

}  // namespace ks
