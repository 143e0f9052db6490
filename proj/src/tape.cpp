#include "edr/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "edr/errors.hpp"
#include "edr/rng.hpp"

namespace edr {

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

ValueId Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

const Tape::Node& Tape::node(ValueId id) const { return nodes_[id]; }

void Tape::check_id(ValueId id, const char* who) const {
  if (id >= nodes_.size()) {
    throw IndexError(std::string(who) + ": value id " + std::to_string(id) +
                     " is not on this record");
  }
}

ValueId Tape::constant(Tensor value) {
  Node n;
  n.kind = OpKind::kLeaf;
  n.value = std::move(value);
  return push(std::move(n));
}

ValueId Tape::param(const std::string& name, Tensor value) {
  for (const auto& [existing, id] : named_) {
    if (existing == name) {
      throw UsageError("param: '" + name + "' is already registered on this record; " +
                       "reuse its value id to share the tensor");
    }
  }
  Node n;
  n.kind = OpKind::kLeaf;
  n.value = std::move(value);
  n.name_idx = static_cast<int>(named_.size());
  ValueId id = push(std::move(n));
  named_.emplace_back(name, id);
  return id;
}

const Tensor& Tape::value(ValueId id) const {
  check_id(id, "value");
  return nodes_[id].value;
}

ValueId Tape::matmul(ValueId a, ValueId b) {
  check_id(a, "matmul");
  check_id(b, "matmul");
  const Tensor& ta = nodes_[a].value;
  const Tensor& tb = nodes_[b].value;
  if (ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.rows()) {
    throw ShapeError("matmul: incompatible shapes " + ta.shape_str() + " and " + tb.shape_str());
  }
  const std::size_t m = ta.rows(), k = ta.cols(), n = tb.cols();
  Tensor out({m, n});
  const double* pa = ta.data();
  const double* pb = tb.data();
  double* po = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = pa + i * k;
    double* orow = po + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      const double* brow = pb + kk * n;
      for (std::size_t j = 0; j < n; ++j) {
        orow[j] += av * brow[j];
      }
    }
  }
  Node node;
  node.kind = OpKind::kMatMul;
  node.inputs = {a, b};
  node.value = std::move(out);
  return push(std::move(node));
}

ValueId Tape::add(ValueId a, ValueId b) {
  check_id(a, "add");
  check_id(b, "add");
  const Tensor& ta = nodes_[a].value;
  const Tensor& tb = nodes_[b].value;
  Tensor out;
  if (ta.same_shape(tb)) {
    out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += tb[i];
  } else if (tb.size() == 1) {
    out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += tb[0];
  } else if (ta.size() == 1) {
    out = tb;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += ta[0];
  } else if (ta.rank() == 2 && tb.rank() == 1 && tb.size() == ta.cols()) {
    out = ta;
    for (std::size_t r = 0; r < ta.rows(); ++r) {
      for (std::size_t c = 0; c < ta.cols(); ++c) out.at(r, c) += tb[c];
    }
  } else {
    throw ShapeError("add: incompatible shapes " + ta.shape_str() + " and " + tb.shape_str());
  }
  Node node;
  node.kind = OpKind::kAdd;
  node.inputs = {a, b};
  node.value = std::move(out);
  return push(std::move(node));
}

ValueId Tape::sub(ValueId a, ValueId b) { return add(a, mul(constant(Tensor::scalar(-1.0)), b)); }

ValueId Tape::mul(ValueId a, ValueId b) {
  check_id(a, "mul");
  check_id(b, "mul");
  const Tensor& ta = nodes_[a].value;
  const Tensor& tb = nodes_[b].value;
  Tensor out;
  if (ta.same_shape(tb)) {
    out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= tb[i];
  } else if (tb.size() == 1) {
    out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= tb[0];
  } else if (ta.size() == 1) {
    out = tb;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= ta[0];
  } else if (ta.rank() == 2 && tb.rank() == 2 && tb.cols() == 1 && tb.rows() == ta.rows()) {
    out = ta;
    for (std::size_t r = 0; r < ta.rows(); ++r) {
      const double s = tb[r];
      for (std::size_t c = 0; c < ta.cols(); ++c) out.at(r, c) *= s;
    }
  } else {
    throw ShapeError("mul: incompatible shapes " + ta.shape_str() + " and " + tb.shape_str());
  }
  Node node;
  node.kind = OpKind::kMul;
  node.inputs = {a, b};
  node.value = std::move(out);
  return push(std::move(node));
}

ValueId Tape::tanh(ValueId x) {
  check_id(x, "tanh");
  Tensor out = nodes_[x].value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
  Node node;
  node.kind = OpKind::kTanh;
  node.inputs = {x};
  node.value = std::move(out);
  return push(std::move(node));
}

ValueId Tape::sigmoid(ValueId x) {
  check_id(x, "sigmoid");
  Tensor out = nodes_[x].value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(out[i]);
  Node node;
  node.kind = OpKind::kSigmoid;
  node.inputs = {x};
  node.value = std::move(out);
  return push(std::move(node));
}

ValueId Tape::softmax(ValueId x) {
  check_id(x, "softmax");
  const Tensor& tx = nodes_[x].value;
  Tensor out = tx;
  const std::size_t rows = tx.rows(), cols = tx.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out.data() + r * cols;
    double mx = row[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      row[c] = std::exp(row[c] - mx);
      sum += row[c];
    }
    for (std::size_t c = 0; c < cols; ++c) row[c] /= sum;
  }
  Node node;
  node.kind = OpKind::kSoftmax;
  node.inputs = {x};
  node.value = std::move(out);
  return push(std::move(node));
}

ValueId Tape::concat(const std::vector<ValueId>& parts) {
  if (parts.empty()) throw UsageError("concat: no inputs");
  for (ValueId p : parts) check_id(p, "concat");
  const Tensor& first = nodes_[parts[0]].value;
  const std::size_t rank = first.rank();
  const std::size_t rows = first.rows();
  std::size_t total_cols = 0;
  for (ValueId p : parts) {
    const Tensor& t = nodes_[p].value;
    if (t.rank() != rank || t.rows() != rows) {
      throw ShapeError("concat: incompatible shapes " + first.shape_str() + " and " +
                       t.shape_str());
    }
    total_cols += t.cols();
  }
  Tensor out(rank == 2 ? std::vector<std::size_t>{rows, total_cols}
                       : std::vector<std::size_t>{total_cols});
  std::size_t offset = 0;
  for (ValueId p : parts) {
    const Tensor& t = nodes_[p].value;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < t.cols(); ++c) {
        out.data()[r * total_cols + offset + c] = t.data()[r * t.cols() + c];
      }
    }
    offset += t.cols();
  }
  Node node;
  node.kind = OpKind::kConcat;
  node.inputs = parts;
  node.value = std::move(out);
  return push(std::move(node));
}

ValueId Tape::slice(ValueId x, int dim, std::size_t begin, std::size_t end) {
  check_id(x, "slice");
  const Tensor& tx = nodes_[x].value;
  if (dim < 0 || static_cast<std::size_t>(dim) >= tx.rank()) {
    throw IndexError("slice: dim " + std::to_string(dim) + " out of range for " + tx.shape_str());
  }
  const std::size_t extent = tx.shape()[static_cast<std::size_t>(dim)];
  if (begin >= end || end > extent) {
    throw IndexError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for extent " + std::to_string(extent));
  }
  const std::size_t len = end - begin;
  Tensor out;
  if (tx.rank() == 1) {
    out = Tensor({len});
    for (std::size_t i = 0; i < len; ++i) out[i] = tx[begin + i];
  } else if (dim == 0) {
    out = Tensor({len, tx.cols()});
    for (std::size_t r = 0; r < len; ++r) {
      for (std::size_t c = 0; c < tx.cols(); ++c) out.at(r, c) = tx.at(begin + r, c);
    }
  } else {
    out = Tensor({tx.rows(), len});
    for (std::size_t r = 0; r < tx.rows(); ++r) {
      for (std::size_t c = 0; c < len; ++c) out.at(r, c) = tx.at(r, begin + c);
    }
  }
  Node node;
  node.kind = OpKind::kSlice;
  node.inputs = {x};
  node.value = std::move(out);
  node.dim = dim;
  node.begin = begin;
  node.end = end;
  return push(std::move(node));
}

ValueId Tape::embedding_lookup(ValueId table, std::int32_t id) {
  check_id(table, "embedding_lookup");
  const Tensor& tt = nodes_[table].value;
  if (tt.rank() != 2) {
    throw ShapeError("embedding_lookup: table must be rank 2, got " + tt.shape_str());
  }
  if (id < 0 || static_cast<std::size_t>(id) >= tt.rows()) {
    throw IndexError("embedding_lookup: id " + std::to_string(id) + " out of range for table " +
                     tt.shape_str());
  }
  Tensor out({tt.cols()});
  for (std::size_t c = 0; c < tt.cols(); ++c) out[c] = tt.at(static_cast<std::size_t>(id), c);
  Node node;
  node.kind = OpKind::kEmbedding;
  node.inputs = {table};
  node.value = std::move(out);
  node.ids = {id};
  return push(std::move(node));
}

ValueId Tape::embedding_rows(ValueId table, std::vector<std::int32_t> ids) {
  check_id(table, "embedding_rows");
  const Tensor& tt = nodes_[table].value;
  if (tt.rank() != 2) {
    throw ShapeError("embedding_rows: table must be rank 2, got " + tt.shape_str());
  }
  if (ids.empty()) throw UsageError("embedding_rows: no ids");
  Tensor out({ids.size(), tt.cols()});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const std::int32_t id = ids[r];
    if (id < 0 || static_cast<std::size_t>(id) >= tt.rows()) {
      throw IndexError("embedding_rows: id " + std::to_string(id) + " out of range for table " +
                       tt.shape_str());
    }
    for (std::size_t c = 0; c < tt.cols(); ++c) out.at(r, c) = tt.at(static_cast<std::size_t>(id), c);
  }
  Node node;
  node.kind = OpKind::kEmbedding;
  node.inputs = {table};
  node.value = std::move(out);
  node.ids = std::move(ids);
  return push(std::move(node));
}

ValueId Tape::cross_entropy(ValueId dist, std::int32_t target_id) {
  return cross_entropy_rows(dist, std::vector<std::int32_t>{target_id});
}

ValueId Tape::cross_entropy_rows(ValueId dists, std::vector<std::int32_t> target_ids) {
  check_id(dists, "cross_entropy");
  const Tensor& td = nodes_[dists].value;
  const std::size_t rows = td.rows(), cols = td.cols();
  if (target_ids.size() != rows) {
    throw ShapeError("cross_entropy: " + std::to_string(target_ids.size()) + " targets for " +
                     std::to_string(rows) + " distribution rows");
  }
  for (std::size_t r = 0; r < rows; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) sum += td.data()[r * cols + c];
    if (std::abs(sum - 1.0) > 1e-6) {
      throw UsageError("cross_entropy: row " + std::to_string(r) +
                       " is not a probability distribution (sum " + std::to_string(sum) + ")");
    }
    const std::int32_t id = target_ids[r];
    if (id < 0 || static_cast<std::size_t>(id) >= cols) {
      throw IndexError("cross_entropy: target id " + std::to_string(id) +
                       " out of range for distribution of size " + std::to_string(cols));
    }
  }
  Tensor out({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    const double p = td.data()[r * cols + static_cast<std::size_t>(target_ids[r])];
    out[r] = -std::log(std::max(p, kProbFloor));
  }
  if (rows == 1) out = Tensor({1}, {out[0]});
  Node node;
  node.kind = OpKind::kCrossEntropy;
  node.inputs = {dists};
  node.value = std::move(out);
  node.ids = std::move(target_ids);
  return push(std::move(node));
}

ValueId Tape::mean(ValueId x) {
  check_id(x, "mean");
  const Tensor& tx = nodes_[x].value;
  double sum = 0.0;
  for (std::size_t i = 0; i < tx.size(); ++i) sum += tx[i];
  Node node;
  node.kind = OpKind::kMean;
  node.inputs = {x};
  node.value = Tensor::scalar(sum / static_cast<double>(tx.size()));
  return push(std::move(node));
}

std::vector<Tensor> Tape::backward_all(ValueId loss) const {
  check_id(loss, "backward");
  if (nodes_[loss].value.size() != 1) {
    throw UsageError("backward: loss must be a scalar, got " + nodes_[loss].value.shape_str());
  }
  std::vector<Tensor> grads(nodes_.size());
  auto ensure = [&](ValueId id) -> Tensor& {
    if (grads[id].empty()) grads[id] = Tensor::zeros_like(nodes_[id].value);
    return grads[id];
  };
  ensure(loss)[0] = 1.0;

  for (std::size_t k = loss + 1; k-- > 0;) {
    if (grads[k].empty()) continue;
    const Node& n = nodes_[k];
    const Tensor& g = grads[k];
    const Tensor& y = n.value;
    switch (n.kind) {
      case OpKind::kLeaf:
        break;
      case OpKind::kMatMul: {
        const Tensor& a = nodes_[n.inputs[0]].value;
        const Tensor& b = nodes_[n.inputs[1]].value;
        Tensor& da = ensure(n.inputs[0]);
        Tensor& db = ensure(n.inputs[1]);
        const std::size_t m = a.rows(), kk = a.cols(), nn = b.cols();
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = g.data() + i * nn;
          for (std::size_t k2 = 0; k2 < kk; ++k2) {
            const double* brow = b.data() + k2 * nn;
            double s = 0.0;
            for (std::size_t j = 0; j < nn; ++j) s += grow[j] * brow[j];
            da.data()[i * kk + k2] += s;
          }
        }
        for (std::size_t i = 0; i < m; ++i) {
          const double* arow = a.data() + i * kk;
          const double* grow = g.data() + i * nn;
          for (std::size_t k2 = 0; k2 < kk; ++k2) {
            const double av = arow[k2];
            double* dbrow = db.data() + k2 * nn;
            for (std::size_t j = 0; j < nn; ++j) dbrow[j] += av * grow[j];
          }
        }
        break;
      }
      case OpKind::kAdd: {
        const Tensor& a = nodes_[n.inputs[0]].value;
        const Tensor& b = nodes_[n.inputs[1]].value;
        Tensor& da = ensure(n.inputs[0]);
        Tensor& db = ensure(n.inputs[1]);
        if (a.same_shape(b)) {
          for (std::size_t i = 0; i < g.size(); ++i) {
            da[i] += g[i];
            db[i] += g[i];
          }
        } else if (b.size() == 1) {
          for (std::size_t i = 0; i < g.size(); ++i) {
            da[i] += g[i];
            db[0] += g[i];
          }
        } else if (a.size() == 1) {
          for (std::size_t i = 0; i < g.size(); ++i) {
            db[i] += g[i];
            da[0] += g[i];
          }
        } else {  // row broadcast of b
          for (std::size_t r = 0; r < a.rows(); ++r) {
            for (std::size_t c = 0; c < a.cols(); ++c) {
              const double gv = g.data()[r * a.cols() + c];
              da.data()[r * a.cols() + c] += gv;
              db[c] += gv;
            }
          }
        }
        break;
      }
      case OpKind::kMul: {
        const Tensor& a = nodes_[n.inputs[0]].value;
        const Tensor& b = nodes_[n.inputs[1]].value;
        Tensor& da = ensure(n.inputs[0]);
        Tensor& db = ensure(n.inputs[1]);
        if (a.same_shape(b)) {
          for (std::size_t i = 0; i < g.size(); ++i) {
            da[i] += g[i] * b[i];
            db[i] += g[i] * a[i];
          }
        } else if (b.size() == 1) {
          for (std::size_t i = 0; i < g.size(); ++i) {
            da[i] += g[i] * b[0];
            db[0] += g[i] * a[i];
          }
        } else if (a.size() == 1) {
          for (std::size_t i = 0; i < g.size(); ++i) {
            db[i] += g[i] * a[0];
            da[0] += g[i] * b[i];
          }
        } else {  // column broadcast of b
          for (std::size_t r = 0; r < a.rows(); ++r) {
            const double bv = b[r];
            double acc = 0.0;
            for (std::size_t c = 0; c < a.cols(); ++c) {
              const double gv = g.data()[r * a.cols() + c];
              da.data()[r * a.cols() + c] += gv * bv;
              acc += gv * a.data()[r * a.cols() + c];
            }
            db[r] += acc;
          }
        }
        break;
      }
      case OpKind::kTanh: {
        Tensor& dx = ensure(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * (1.0 - y[i] * y[i]);
        break;
      }
      case OpKind::kSigmoid: {
        Tensor& dx = ensure(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * y[i] * (1.0 - y[i]);
        break;
      }
      case OpKind::kSoftmax: {
        Tensor& dx = ensure(n.inputs[0]);
        const std::size_t rows = y.rows(), cols = y.cols();
        for (std::size_t r = 0; r < rows; ++r) {
          const double* yrow = y.data() + r * cols;
          const double* grow = g.data() + r * cols;
          double dot = 0.0;
          for (std::size_t c = 0; c < cols; ++c) dot += grow[c] * yrow[c];
          double* drow = dx.data() + r * cols;
          for (std::size_t c = 0; c < cols; ++c) drow[c] += yrow[c] * (grow[c] - dot);
        }
        break;
      }
      case OpKind::kConcat: {
        const std::size_t rows = y.rows(), total = y.cols();
        std::size_t offset = 0;
        for (ValueId p : n.inputs) {
          const Tensor& t = nodes_[p].value;
          Tensor& dp = ensure(p);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < t.cols(); ++c) {
              dp.data()[r * t.cols() + c] += g.data()[r * total + offset + c];
            }
          }
          offset += t.cols();
        }
        break;
      }
      case OpKind::kSlice: {
        const Tensor& x = nodes_[n.inputs[0]].value;
        Tensor& dx = ensure(n.inputs[0]);
        if (x.rank() == 1) {
          for (std::size_t i = 0; i < g.size(); ++i) dx[n.begin + i] += g[i];
        } else if (n.dim == 0) {
          for (std::size_t r = 0; r < y.rows(); ++r) {
            for (std::size_t c = 0; c < x.cols(); ++c) dx.at(n.begin + r, c) += g.at(r, c);
          }
        } else {
          for (std::size_t r = 0; r < x.rows(); ++r) {
            for (std::size_t c = 0; c < y.cols(); ++c) dx.at(r, n.begin + c) += g.at(r, c);
          }
        }
        break;
      }
      case OpKind::kEmbedding: {
        Tensor& dt = ensure(n.inputs[0]);
        const std::size_t d = dt.cols();
        for (std::size_t r = 0; r < n.ids.size(); ++r) {
          const std::size_t row = static_cast<std::size_t>(n.ids[r]);
          for (std::size_t c = 0; c < d; ++c) dt.data()[row * d + c] += g.data()[r * d + c];
        }
        break;
      }
      case OpKind::kCrossEntropy: {
        const Tensor& d = nodes_[n.inputs[0]].value;
        Tensor& dd = ensure(n.inputs[0]);
        const std::size_t cols = d.cols();
        for (std::size_t r = 0; r < n.ids.size(); ++r) {
          const std::size_t c = static_cast<std::size_t>(n.ids[r]);
          const double p = d.data()[r * cols + c];
          if (p > kProbFloor) dd.data()[r * cols + c] += g[r] * (-1.0 / p);
        }
        break;
      }
      case OpKind::kMean: {
        const Tensor& x = nodes_[n.inputs[0]].value;
        Tensor& dx = ensure(n.inputs[0]);
        const double gv = g[0] / static_cast<double>(x.size());
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += gv;
        break;
      }
    }
  }
  return grads;
}

GradientMap Tape::backward(ValueId loss) const {
  std::vector<Tensor> grads = backward_all(loss);
  GradientMap out;
  for (const auto& [name, id] : named_) {
    if (grads[id].empty()) {
      out[name] = Tensor::zeros_like(nodes_[id].value);
    } else {
      out[name] = std::move(grads[id]);
    }
  }
  return out;
}

FiniteDiffReport finite_diff_check(const LossProgram& program, const ParameterMap& params,
                                   double epsilon, std::uint64_t seed, std::size_t max_coords) {
  if (epsilon <= 0.0) throw UsageError("finite_diff_check: epsilon must be positive");
  if (params.empty()) throw UsageError("finite_diff_check: no parameters");

  auto eval = [&](const ParameterMap& p) {
    Tape t;
    ValueId loss = program(t, p);
    const Tensor& v = t.value(loss);
    if (v.size() != 1) throw UsageError("finite_diff_check: loss program must produce a scalar");
    return v[0];
  };

  const double base = eval(params);
  if (eval(params) != base) {
    throw DeterminismError("finite_diff_check: loss function is not deterministic");
  }

  Tape tape;
  ValueId loss = program(tape, params);
  GradientMap analytic = tape.backward(loss);

  std::size_t per_tensor = std::max<std::size_t>(1, max_coords / params.size());
  per_tensor = std::min<std::size_t>(per_tensor, 200);

  FiniteDiffReport report;
  Rng rng(seed);
  ParameterMap work = params;
  for (auto& [name, tensor] : work) {
    const std::size_t n = tensor.size();
    std::vector<std::size_t> indices(n);
    for (std::size_t i = 0; i < n; ++i) indices[i] = i;
    const std::size_t take = std::min(per_tensor, n);
    for (std::size_t j = 0; j < take; ++j) {
      const std::size_t pick = j + static_cast<std::size_t>(rng.next_bounded(n - j));
      std::swap(indices[j], indices[pick]);
    }
    const Tensor& grad = analytic.at(name);
    for (std::size_t j = 0; j < take; ++j) {
      const std::size_t i = indices[j];
      const double orig = tensor[i];
      tensor[i] = orig + epsilon;
      const double fp = eval(work);
      tensor[i] = orig - epsilon;
      const double fm = eval(work);
      tensor[i] = orig;
      const double numeric = (fp - fm) / (2.0 * epsilon);
      const double a = grad[i];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = name;
        report.worst_index = i;
      }
      ++report.coords_checked;
    }
  }
  return report;
}

}  // namespace edr
