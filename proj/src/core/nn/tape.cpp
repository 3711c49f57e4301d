#include "nn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace unlasting::nn {

const char* to_string(Activation act) {
  switch (act) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::silu: return "silu";
    case Activation::sigmoid: return "sigmoid";
  }
  return "identity";
}

Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "relu") return Activation::relu;
  if (s == "leaky_relu") return Activation::leaky_relu;
  if (s == "silu") return Activation::silu;
  if (s == "sigmoid") return Activation::sigmoid;
  fail(ErrorCode::argument, "unknown activation '" + s + "'");
}

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

namespace {
thread_local KinkProbe* active_probe = nullptr;
}

KinkProbe::KinkProbe() : outer_(active_probe) { active_probe = this; }
KinkProbe::~KinkProbe() { active_probe = outer_; }
KinkProbe* KinkProbe::active() { return active_probe; }

double activate(Activation act, double x) {
  if ((act == Activation::relu || act == Activation::leaky_relu) && active_probe) active_probe->note(x > 0.0);
  switch (act) {
    case Activation::identity: return x;
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::leaky_relu: return x > 0.0 ? x : kLeakySlope * x;
    case Activation::silu: return x * sigmoid(x);
    case Activation::sigmoid: return sigmoid(x);
  }
  return x;
}

double activate_grad(Activation act, double x) {
  switch (act) {
    case Activation::identity: return 1.0;
    case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::leaky_relu: return x > 0.0 ? 1.0 : kLeakySlope;
    case Activation::silu: {
      const double s = sigmoid(x);
      return s * (1.0 + x * (1.0 - s));
    }
    case Activation::sigmoid: {
      const double s = sigmoid(x);
      return s * (1.0 - s);
    }
  }
  return 1.0;
}

// ---------------------------------------------------------------------------

std::size_t ParameterSet::add(const std::string& name, Matrix init) {
  require(!contains(name), ErrorCode::argument, "duplicate parameter name '" + name + "'");
  names_.push_back(name);
  values_.push_back(std::move(init));
  return values_.size() - 1;
}

std::size_t ParameterSet::find(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  require(it != names_.end(), ErrorCode::argument, "no parameter named '" + name + "'");
  return static_cast<std::size_t>(it - names_.begin());
}

bool ParameterSet::contains(const std::string& name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

double& ParameterSet::scalar(std::size_t flat_index) {
  for (auto& v : values_) {
    if (flat_index < static_cast<std::size_t>(v.size())) return v.data()[flat_index];
    flat_index -= static_cast<std::size_t>(v.size());
  }
  fail(ErrorCode::argument, "parameter scalar index out of range");
}

bool ParameterSet::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](const Matrix& m) { return m.allFinite(); });
}

Gradients::Gradients(const ParameterSet& params) {
  g_.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    g_.push_back(Matrix::Zero(params.value(i).rows(), params.value(i).cols()));
  }
}

void Gradients::set_zero() {
  for (auto& m : g_) m.setZero();
}

Gradients& Gradients::operator+=(const Gradients& other) {
  require(other.g_.size() == g_.size(), ErrorCode::argument, "gradient buffers differ in size");
  for (std::size_t i = 0; i < g_.size(); ++i) g_[i] += other.g_[i];
  return *this;
}

Gradients& Gradients::operator*=(double c) {
  for (auto& m : g_) m *= c;
  return *this;
}

bool Gradients::all_finite() const {
  return std::all_of(g_.begin(), g_.end(), [](const Matrix& m) { return m.allFinite(); });
}

double Gradients::scalar(std::size_t flat_index) const {
  for (const auto& v : g_) {
    if (flat_index < static_cast<std::size_t>(v.size())) return v.data()[flat_index];
    flat_index -= static_cast<std::size_t>(v.size());
  }
  fail(ErrorCode::argument, "gradient scalar index out of range");
}

// ---------------------------------------------------------------------------
// Graph attention kernel shared by the value-level function and the tape op.

namespace {

struct GatHeadCache {
  Matrix z;          // N x D_out neighbour projections
  Matrix q;          // N x D_out receiving-node projections
  Attention alpha;   // softmax weights per neighbor
};

double leaky(double v, double slope) { return v > 0.0 ? v : slope * v; }

Matrix gat_head(const Matrix& features, const grn::Grn& graph, const Matrix& weight, const Matrix& query,
                const Matrix& attn, double slope, GatHeadCache& cache) {
  const Eigen::Index d_out = weight.rows();
  require(weight.cols() == features.cols() && query.rows() == d_out && query.cols() == features.cols(),
          ErrorCode::argument, "gat: head projections do not match feature width");
  require(attn.rows() == d_out && attn.cols() == 1, ErrorCode::argument, "gat: attention vector must be D_out x 1");
  require(static_cast<std::size_t>(features.rows()) == graph.size(), ErrorCode::argument,
          "gat: feature rows do not match graph size");
  cache.z.noalias() = features * weight.transpose();
  cache.q.noalias() = features * query.transpose();
  const std::size_t n = graph.size();
  cache.alpha.assign(n, {});
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(n), d_out);
  std::vector<double> e;
  KinkProbe* probe = KinkProbe::active();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& nb = graph.neighbors(i);
    const auto qi = cache.q.row(static_cast<Eigen::Index>(i));
    auto& alpha = cache.alpha[i];
    alpha.resize(nb.size());
    e.resize(nb.size());
    double max_e = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < nb.size(); ++k) {
      const auto zj = cache.z.row(static_cast<Eigen::Index>(nb[k]));
      double s = 0.0;
      for (Eigen::Index d = 0; d < d_out; ++d) {
        const double u = qi[d] + zj[d];
        if (probe) probe->note(u > 0.0);
        s += attn(d, 0) * leaky(u, slope);
      }
      e[k] = s;
      max_e = std::max(max_e, s);
    }
    double total = 0.0;
    for (std::size_t k = 0; k < nb.size(); ++k) {
      alpha[k] = std::exp(e[k] - max_e);
      total += alpha[k];
    }
    for (std::size_t k = 0; k < nb.size(); ++k) {
      alpha[k] /= total;
      out.row(static_cast<Eigen::Index>(i)) += alpha[k] * cache.z.row(static_cast<Eigen::Index>(nb[k]));
    }
  }
  return out;
}

}  // namespace

Matrix gat_forward(const Matrix& features, const grn::Grn& graph, std::span<const Matrix> weights,
                   std::span<const Matrix> queries, std::span<const Matrix> attns, double slope,
                   std::vector<Attention>* attention) {
  require(!weights.empty() && weights.size() == attns.size() && weights.size() == queries.size(),
          ErrorCode::argument, "gat: need >= 1 complete head");
  Matrix out;
  if (attention) attention->clear();
  for (std::size_t h = 0; h < weights.size(); ++h) {
    GatHeadCache cache;
    Matrix head = gat_head(features, graph, weights[h], queries[h], attns[h], slope, cache);
    if (h == 0) {
      out = head;
    } else {
      require(head.cols() == out.cols(), ErrorCode::argument, "gat: heads disagree on D_out");
      out += head;
    }
    if (attention) attention->push_back(std::move(cache.alpha));
  }
  return out / static_cast<double>(weights.size());
}

// ---------------------------------------------------------------------------

Tape::Tape(const ParameterSet& params) : params_(&params), param_leaf_(params.size(), -1) {
  nodes_.reserve(128);
}

Var Tape::push(const char* op, Matrix value, Backward back) {
  if (!value.allFinite()) fail(ErrorCode::numeric, std::string("non-finite value produced by ") + op);
  Node node;
  node.own = std::move(value);
  node.op = op;
  node.back = std::move(back);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Tape::parameter(std::size_t id) {
  require(id < params_->size(), ErrorCode::argument, "unknown parameter id");
  if (param_leaf_[id] >= 0) return Var{static_cast<std::size_t>(param_leaf_[id])};
  Node node;
  node.ref = &params_->value(id);
  node.param = static_cast<long>(id);
  node.op = "parameter";
  nodes_.push_back(std::move(node));
  param_leaf_[id] = static_cast<long>(nodes_.size() - 1);
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Matrix value) { return push("constant", std::move(value), nullptr); }

const Matrix& Tape::value(Var v) const {
  const Node& n = nodes_.at(v.index);
  return n.ref ? *n.ref : n.own;
}

Matrix& Tape::grad(std::size_t index) {
  if (grads_.size() < nodes_.size()) grads_.resize(nodes_.size());
  Matrix& g = grads_[index];
  if (g.size() == 0) {
    const Matrix& v = value(Var{index});
    g = Matrix::Zero(v.rows(), v.cols());
  }
  return g;
}

Var Tape::linear(Var x, Var weight, Var bias) {
  const Matrix& X = value(x);
  const Matrix& W = value(weight);
  const Matrix& b = value(bias);
  require(X.cols() == W.cols(), ErrorCode::argument, "linear: input width does not match weight");
  require(b.rows() == W.rows() && b.cols() == 1, ErrorCode::argument, "linear: bias shape mismatch");
  Matrix out = X * W.transpose();
  out.rowwise() += b.transpose().row(0);
  return push("linear", std::move(out), [x, weight, bias](Tape& t, std::size_t self) {
    const Matrix& g = t.grads_[self];
    t.grad(x).noalias() += g * t.value(weight);
    t.grad(weight).noalias() += g.transpose() * t.value(x);
    t.grad(bias) += g.colwise().sum().transpose();
  });
}

Var Tape::linear_ctx(Var x, Var ctx, Var weight, Var bias) {
  const Matrix& X = value(x);
  const Matrix& C = value(ctx);
  const Matrix& W = value(weight);
  const Matrix& b = value(bias);
  const Eigen::Index in_x = X.cols();
  require(C.rows() == 1, ErrorCode::argument, "linear_ctx: context must be a single row");
  require(in_x + C.cols() == W.cols(), ErrorCode::argument, "linear_ctx: input widths do not match weight");
  require(b.rows() == W.rows() && b.cols() == 1, ErrorCode::argument, "linear_ctx: bias shape mismatch");
  Eigen::RowVectorXd shared = C.row(0) * W.rightCols(C.cols()).transpose() + b.transpose();
  Matrix out = X * W.leftCols(in_x).transpose();
  out.rowwise() += shared;
  return push("linear_ctx", std::move(out), [x, ctx, weight, bias, in_x](Tape& t, std::size_t self) {
    const Matrix& g = t.grads_[self];
    const Matrix& Wv = t.value(weight);
    const Eigen::Index in_c = Wv.cols() - in_x;
    Eigen::RowVectorXd gsum = g.colwise().sum();
    t.grad(x).noalias() += g * Wv.leftCols(in_x);
    t.grad(ctx).noalias() += gsum * Wv.rightCols(in_c);
    Matrix& gw = t.grad(weight);
    gw.leftCols(in_x).noalias() += g.transpose() * t.value(x);
    gw.rightCols(in_c).noalias() += gsum.transpose() * t.value(ctx);
    t.grad(bias) += gsum.transpose();
  });
}

Var Tape::activate(Var x, Activation act) {
  if (act == Activation::identity) return x;
  Matrix out = value(x).unaryExpr([act](double v) { return nn::activate(act, v); });
  return push(to_string(act), std::move(out), [x, act](Tape& t, std::size_t self) {
    t.grad(x).array() +=
        t.grads_[self].array() * t.value(x).unaryExpr([act](double v) { return activate_grad(act, v); }).array();
  });
}

Var Tape::add(Var a, Var b) {
  require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), ErrorCode::argument,
          "add: shape mismatch");
  return push("add", value(a) + value(b), [a, b](Tape& t, std::size_t self) {
    t.grad(a) += t.grads_[self];
    t.grad(b) += t.grads_[self];
  });
}

Var Tape::add_row(Var x, Var row) {
  const Matrix& r = value(row);
  require(r.rows() == 1 && r.cols() == value(x).cols(), ErrorCode::argument, "add_row: shape mismatch");
  Matrix out = value(x);
  out.rowwise() += r.row(0);
  return push("add_row", std::move(out), [x, row](Tape& t, std::size_t self) {
    t.grad(x) += t.grads_[self];
    t.grad(row) += t.grads_[self].colwise().sum();
  });
}

Var Tape::scale_rows(Var x, const Eigen::VectorXd& w) {
  require(w.size() == value(x).rows(), ErrorCode::argument, "scale_rows: weight length mismatch");
  Matrix out = w.asDiagonal() * value(x);
  return push("scale_rows", std::move(out), [x, w](Tape& t, std::size_t self) {
    t.grad(x) += w.asDiagonal() * t.grads_[self];
  });
}

Var Tape::concat_cols(std::initializer_list<Var> parts) {
  std::vector<Var> ps(parts);
  require(!ps.empty(), ErrorCode::argument, "concat_cols: no inputs");
  const Eigen::Index rows = value(ps[0]).rows();
  Eigen::Index cols = 0;
  for (auto p : ps) {
    require(value(p).rows() == rows, ErrorCode::argument, "concat_cols: row count mismatch");
    cols += value(p).cols();
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (auto p : ps) {
    out.middleCols(c, value(p).cols()) = value(p);
    c += value(p).cols();
  }
  return push("concat_cols", std::move(out), [ps](Tape& t, std::size_t self) {
    Eigen::Index c0 = 0;
    for (auto p : ps) {
      const Eigen::Index w = t.value(p).cols();
      t.grad(p) += t.grads_[self].middleCols(c0, w);
      c0 += w;
    }
  });
}

Var Tape::transpose(Var x) {
  return push("transpose", value(x).transpose(), [x](Tape& t, std::size_t self) {
    t.grad(x) += t.grads_[self].transpose();
  });
}

Var Tape::row(Var x, Eigen::Index r) {
  require(r >= 0 && r < value(x).rows(), ErrorCode::argument, "row: index out of range");
  return push("row", value(x).row(r), [x, r](Tape& t, std::size_t self) {
    t.grad(x).row(r) += t.grads_[self].row(0);
  });
}

Var Tape::rowwise_dot(Var a, Var b) {
  require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), ErrorCode::argument,
          "rowwise_dot: shape mismatch");
  Matrix out = value(a).cwiseProduct(value(b)).rowwise().sum();
  return push("rowwise_dot", std::move(out), [a, b](Tape& t, std::size_t self) {
    const Eigen::VectorXd g = t.grads_[self].col(0);
    t.grad(a) += g.asDiagonal() * t.value(b);
    t.grad(b) += g.asDiagonal() * t.value(a);
  });
}

Var Tape::gat(Var features, const grn::Grn& graph, std::span<const GatHeadVars> heads, double slope) {
  require(!heads.empty(), ErrorCode::argument, "gat: need >= 1 head");
  auto caches = std::make_shared<std::vector<GatHeadCache>>(heads.size());
  std::vector<GatHeadVars> hv(heads.begin(), heads.end());
  Matrix out;
  for (std::size_t h = 0; h < hv.size(); ++h) {
    Matrix head = gat_head(value(features), graph, value(hv[h].weight), value(hv[h].query), value(hv[h].attn), slope,
                           (*caches)[h]);
    if (h == 0) {
      out = std::move(head);
    } else {
      require(head.cols() == out.cols(), ErrorCode::argument, "gat: heads disagree on D_out");
      out += head;
    }
  }
  out /= static_cast<double>(hv.size());
  const grn::Grn* g = &graph;
  return push("gat", std::move(out), [features, hv, caches, g, slope](Tape& t, std::size_t self) {
    const double inv_h = 1.0 / static_cast<double>(hv.size());
    const Matrix gout = t.grads_[self] * inv_h;
    const std::size_t n = g->size();
    for (std::size_t h = 0; h < hv.size(); ++h) {
      const GatHeadCache& c = (*caches)[h];
      const Matrix& a = t.value(hv[h].attn);
      const Eigen::Index d_out = c.z.cols();
      Matrix dz = Matrix::Zero(c.z.rows(), d_out);
      Matrix dq = Matrix::Zero(c.q.rows(), d_out);
      Matrix da = Matrix::Zero(d_out, 1);
      std::vector<double> dalpha;
      for (std::size_t i = 0; i < n; ++i) {
        const auto& nb = g->neighbors(i);
        const auto& alpha = c.alpha[i];
        const auto gi = gout.row(static_cast<Eigen::Index>(i));
        const auto qi = c.q.row(static_cast<Eigen::Index>(i));
        dalpha.resize(nb.size());
        double weighted = 0.0;
        for (std::size_t k = 0; k < nb.size(); ++k) {
          const auto j = static_cast<Eigen::Index>(nb[k]);
          dz.row(j) += alpha[k] * gi;
          dalpha[k] = gi.dot(c.z.row(j));
          weighted += alpha[k] * dalpha[k];
        }
        for (std::size_t k = 0; k < nb.size(); ++k) {
          const double de = alpha[k] * (dalpha[k] - weighted);
          if (de == 0.0) continue;
          const auto j = static_cast<Eigen::Index>(nb[k]);
          const auto zj = c.z.row(j);
          for (Eigen::Index d = 0; d < d_out; ++d) {
            const double u = qi[d] + zj[d];
            da(d, 0) += de * leaky(u, slope);
            const double du = de * a(d, 0) * (u > 0.0 ? 1.0 : slope);
            dq(static_cast<Eigen::Index>(i), d) += du;
            dz(j, d) += du;
          }
        }
      }
      t.grad(hv[h].attn) += da;
      const Matrix& f = t.value(features);
      t.grad(hv[h].weight).noalias() += dz.transpose() * f;
      t.grad(hv[h].query).noalias() += dq.transpose() * f;
      t.grad(features).noalias() += dz * t.value(hv[h].weight);
      t.grad(features).noalias() += dq * t.value(hv[h].query);
    }
  });
}

Var Tape::scale(Var x, double c) {
  return push("scale", value(x) * c, [x, c](Tape& t, std::size_t self) { t.grad(x) += c * t.grads_[self]; });
}

Var Tape::sum(Var x) {
  Matrix out(1, 1);
  out(0, 0) = value(x).sum();
  return push("sum", std::move(out), [x](Tape& t, std::size_t self) {
    t.grad(x).array() += t.grads_[self](0, 0);
  });
}

Var Tape::masked_mse(Var pred, const Matrix& target, const Matrix& mask) {
  const Matrix& p = value(pred);
  require(p.rows() == target.rows() && p.cols() == target.cols() && p.rows() == mask.rows() &&
              p.cols() == mask.cols(),
          ErrorCode::argument, "masked_mse: shape mismatch");
  const double denom = mask.sum();
  require(denom > 0.0, ErrorCode::training, "masked_mse: mask selects no entries");
  Matrix diff = p - target;
  Matrix out(1, 1);
  out(0, 0) = mask.cwiseProduct(diff.cwiseProduct(diff)).sum() / denom;
  return push("masked_mse", std::move(out), [pred, diff, mask, denom](Tape& t, std::size_t self) {
    t.grad(pred) += (2.0 * t.grads_[self](0, 0) / denom) * mask.cwiseProduct(diff);
  });
}

Var Tape::bce(Var prob, const Matrix& target, double eps) {
  const Matrix& p = value(prob);
  require(p.rows() == target.rows() && p.cols() == target.cols(), ErrorCode::argument, "bce: shape mismatch");
  const double n = static_cast<double>(p.size());
  double loss = 0.0;
  KinkProbe* probe = KinkProbe::active();
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (probe) probe->note(p.data()[i] <= eps ? 0 : p.data()[i] >= 1.0 - eps ? 2 : 1);
    const double pc = std::clamp(p.data()[i], eps, 1.0 - eps);
    const double y = target.data()[i];
    loss -= y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc);
  }
  Matrix out(1, 1);
  out(0, 0) = loss / n;
  return push("bce", std::move(out), [prob, target, eps, n](Tape& t, std::size_t self) {
    const Matrix& pv = t.value(prob);
    Matrix& g = t.grad(prob);
    const double up = t.grads_[self](0, 0);
    for (Eigen::Index i = 0; i < pv.size(); ++i) {
      const double pi = pv.data()[i];
      if (pi <= eps || pi >= 1.0 - eps) continue;  // clamped region has zero slope
      const double y = target.data()[i];
      g.data()[i] += up * (-(y / pi) + (1.0 - y) / (1.0 - pi)) / n;
    }
  });
}

void Tape::backward(Var loss, Gradients& grads, double seed) {
  const Matrix& l = value(loss);
  require(l.rows() == 1 && l.cols() == 1, ErrorCode::argument, "backward: loss must be a scalar");
  require(std::isfinite(l(0, 0)), ErrorCode::numeric, "backward: loss is not finite");
  require(grads.size() == params_->size(), ErrorCode::argument, "backward: gradient buffer does not match parameters");
  grads_.assign(nodes_.size(), Matrix());
  grad(loss)(0, 0) = seed;
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    if (!has_grad(i)) continue;
    Node& node = nodes_[i];
    if (node.param >= 0) {
      grads[static_cast<std::size_t>(node.param)] += grads_[i];
    } else if (node.back) {
      node.back(*this, i);
    }
    if (!grads_[i].allFinite()) fail(ErrorCode::numeric, std::string("non-finite gradient at ") + node.op);
  }
  grads_.clear();
}

}  // namespace unlasting::nn
