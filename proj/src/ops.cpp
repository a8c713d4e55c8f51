#include "mins/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "mins/error.hpp"

namespace mins {

namespace {

bool taping(std::initializer_list<const TensorPtr*> inputs) {
  if (!Tape::active()) return false;
  for (const TensorPtr* t : inputs) {
    if (*t && (*t)->requires_grad) return true;
  }
  return false;
}

// Marks out as a graph node and registers its backward closure.
void record(const TensorPtr& out, std::function<void()> fn) {
  out->set_requires_grad(true);
  Tape::active()->record(std::move(fn));
}

void check_same_shape(const TensorPtr& a, const TensorPtr& b, const char* op) {
  if (a->shape != b->shape) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a->shape) +
                     " vs " + shape_str(b->shape));
  }
}

void check_mask_len(std::size_t expected, const std::vector<bool>& mask, const char* op) {
  if (mask.size() != expected) {
    throw ShapeError(std::string(op) + ": mask length " + std::to_string(mask.size()) +
                     " does not match " + std::to_string(expected));
  }
}

// Stabilized softmax of src into dst over unmasked entries; masked -> 0.
void softmax_span(const double* src, double* dst, int n, const std::vector<bool>* mask,
                  int mask_offset) {
  double mx = -std::numeric_limits<double>::infinity();
  int live = 0;
  for (int i = 0; i < n; ++i) {
    if (mask && !(*mask)[static_cast<std::size_t>(mask_offset + i)]) continue;
    mx = std::max(mx, src[i]);
    ++live;
  }
  if (live == 0) throw DegenerateInputError("softmax: all entries masked");
  double z = 0.0;
  for (int i = 0; i < n; ++i) {
    if (mask && !(*mask)[static_cast<std::size_t>(mask_offset + i)]) {
      dst[i] = 0.0;
    } else {
      dst[i] = std::exp(src[i] - mx);
      z += dst[i];
    }
  }
  for (int i = 0; i < n; ++i) dst[i] /= z;
}

// d(softmax)/dx for one row: dx_i = y_i (dy_i - Σ_j dy_j y_j), masked -> 0.
void softmax_backward_span(const double* y, const double* dy, double* dx, int n,
                           const std::vector<bool>* mask, int mask_offset) {
  double inner = 0.0;
  for (int i = 0; i < n; ++i) inner += dy[i] * y[i];
  for (int i = 0; i < n; ++i) {
    if (mask && !(*mask)[static_cast<std::size_t>(mask_offset + i)]) continue;
    dx[i] += y[i] * (dy[i] - inner);
  }
}

}  // namespace

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
  if (a->rank() != 2 || b->rank() != 2) {
    throw ShapeError("matmul: expects rank-2 operands, got " + shape_str(a->shape) +
                     " and " + shape_str(b->shape));
  }
  if (a->cols() != b->rows()) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(a->shape) +
                     " vs " + shape_str(b->shape));
  }
  const int m = a->rows(), k = a->cols(), n = b->cols();
  auto out = zeros({m, n});
  const double* av = a->values.data();
  const double* bv = b->values.data();
  double* cv = out->values.data();
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bv + p * n;
      double* crow = cv + i * n;
      for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  if (taping({&a, &b})) {
    record(out, [a, b, out, m, k, n] {
      const double* dC = out->grad.data();
      if (a->requires_grad) {
        double* dA = a->grad.data();
        const double* bv2 = b->values.data();
        for (int i = 0; i < m; ++i) {
          for (int p = 0; p < k; ++p) {
            const double* brow = bv2 + p * n;
            const double* dcrow = dC + i * n;
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += dcrow[j] * brow[j];
            dA[i * k + p] += acc;
          }
        }
      }
      if (b->requires_grad) {
        double* dB = b->grad.data();
        const double* av2 = a->values.data();
        for (int p = 0; p < k; ++p) {
          for (int i = 0; i < m; ++i) {
            const double aip = av2[i * k + p];
            if (aip == 0.0) continue;
            const double* dcrow = dC + i * n;
            double* dbrow = dB + p * n;
            for (int j = 0; j < n; ++j) dbrow[j] += aip * dcrow[j];
          }
        }
      }
    });
  }
  return out;
}

TensorPtr matvec(const TensorPtr& w, const TensorPtr& x) {
  if (w->rank() != 2 || x->rank() != 1) {
    throw ShapeError("matvec: expects [m×n]·[n], got " + shape_str(w->shape) + " and " +
                     shape_str(x->shape));
  }
  if (w->cols() != x->numel()) {
    throw ShapeError("matvec: inner dimensions differ, " + shape_str(w->shape) + " vs " +
                     shape_str(x->shape));
  }
  const int m = w->rows(), n = w->cols();
  auto out = zeros({m});
  for (int i = 0; i < m; ++i) {
    const double* wrow = w->values.data() + i * n;
    double acc = 0.0;
    for (int j = 0; j < n; ++j) acc += wrow[j] * x->values[j];
    out->values[i] = acc;
  }
  if (taping({&w, &x})) {
    record(out, [w, x, out, m, n] {
      const double* dy = out->grad.data();
      if (w->requires_grad) {
        for (int i = 0; i < m; ++i) {
          const double g = dy[i];
          if (g == 0.0) continue;
          double* dwrow = w->grad.data() + i * n;
          for (int j = 0; j < n; ++j) dwrow[j] += g * x->values[j];
        }
      }
      if (x->requires_grad) {
        for (int i = 0; i < m; ++i) {
          const double g = dy[i];
          if (g == 0.0) continue;
          const double* wrow = w->values.data() + i * n;
          for (int j = 0; j < n; ++j) x->grad[j] += g * wrow[j];
        }
      }
    });
  }
  return out;
}

TensorPtr transpose(const TensorPtr& a) {
  const int m = a->rows(), n = a->cols();
  auto out = zeros({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out->at(j, i) = a->at(i, j);
  if (taping({&a})) {
    record(out, [a, out, m, n] {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) a->grad_at(i, j) += out->grad[static_cast<std::size_t>(j) * m + i];
    });
  }
  return out;
}

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
  check_same_shape(a, b, "add");
  auto out = zeros(a->shape);
  for (int i = 0; i < out->numel(); ++i) out->values[i] = a->values[i] + b->values[i];
  if (taping({&a, &b})) {
    record(out, [a, b, out] {
      const int n = out->numel();
      if (a->requires_grad)
        for (int i = 0; i < n; ++i) a->grad[i] += out->grad[i];
      if (b->requires_grad)
        for (int i = 0; i < n; ++i) b->grad[i] += out->grad[i];
    });
  }
  return out;
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
  check_same_shape(a, b, "sub");
  auto out = zeros(a->shape);
  for (int i = 0; i < out->numel(); ++i) out->values[i] = a->values[i] - b->values[i];
  if (taping({&a, &b})) {
    record(out, [a, b, out] {
      const int n = out->numel();
      if (a->requires_grad)
        for (int i = 0; i < n; ++i) a->grad[i] += out->grad[i];
      if (b->requires_grad)
        for (int i = 0; i < n; ++i) b->grad[i] -= out->grad[i];
    });
  }
  return out;
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
  check_same_shape(a, b, "mul");
  auto out = zeros(a->shape);
  for (int i = 0; i < out->numel(); ++i) out->values[i] = a->values[i] * b->values[i];
  if (taping({&a, &b})) {
    record(out, [a, b, out] {
      const int n = out->numel();
      if (a->requires_grad)
        for (int i = 0; i < n; ++i) a->grad[i] += out->grad[i] * b->values[i];
      if (b->requires_grad)
        for (int i = 0; i < n; ++i) b->grad[i] += out->grad[i] * a->values[i];
    });
  }
  return out;
}

TensorPtr scale(const TensorPtr& a, double c) {
  auto out = zeros(a->shape);
  for (int i = 0; i < out->numel(); ++i) out->values[i] = c * a->values[i];
  if (taping({&a})) {
    record(out, [a, out, c] {
      for (int i = 0; i < out->numel(); ++i) a->grad[i] += c * out->grad[i];
    });
  }
  return out;
}

TensorPtr one_minus(const TensorPtr& a) {
  auto out = zeros(a->shape);
  for (int i = 0; i < out->numel(); ++i) out->values[i] = 1.0 - a->values[i];
  if (taping({&a})) {
    record(out, [a, out] {
      for (int i = 0; i < out->numel(); ++i) a->grad[i] -= out->grad[i];
    });
  }
  return out;
}

TensorPtr add_rowwise(const TensorPtr& m, const TensorPtr& b) {
  if (m->rank() != 2 || b->rank() != 1 || m->cols() != b->numel()) {
    throw ShapeError("add_rowwise: got " + shape_str(m->shape) + " and " +
                     shape_str(b->shape));
  }
  const int rows = m->rows(), n = m->cols();
  auto out = zeros(m->shape);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < n; ++j) out->at(i, j) = m->at(i, j) + b->values[j];
  if (taping({&m, &b})) {
    record(out, [m, b, out, rows, n] {
      if (m->requires_grad)
        for (int i = 0; i < rows * n; ++i) m->grad[i] += out->grad[i];
      if (b->requires_grad)
        for (int i = 0; i < rows; ++i)
          for (int j = 0; j < n; ++j) b->grad[j] += out->grad[static_cast<std::size_t>(i) * n + j];
    });
  }
  return out;
}

TensorPtr sigmoid(const TensorPtr& a) {
  auto out = zeros(a->shape);
  for (int i = 0; i < out->numel(); ++i) {
    const double x = a->values[i];
    // split exp forms so neither branch overflows
    out->values[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                              : std::exp(x) / (1.0 + std::exp(x));
  }
  if (taping({&a})) {
    record(out, [a, out] {
      for (int i = 0; i < out->numel(); ++i) {
        const double y = out->values[i];
        a->grad[i] += out->grad[i] * y * (1.0 - y);
      }
    });
  }
  return out;
}

TensorPtr tanh(const TensorPtr& a) {
  auto out = zeros(a->shape);
  for (int i = 0; i < out->numel(); ++i) out->values[i] = std::tanh(a->values[i]);
  if (taping({&a})) {
    record(out, [a, out] {
      for (int i = 0; i < out->numel(); ++i) {
        const double y = out->values[i];
        a->grad[i] += out->grad[i] * (1.0 - y * y);
      }
    });
  }
  return out;
}

TensorPtr softmax(const TensorPtr& x, const std::vector<bool>* mask) {
  if (x->rank() != 1) throw ShapeError("softmax: expects a vector, got " + shape_str(x->shape));
  const int n = x->numel();
  if (mask) check_mask_len(static_cast<std::size_t>(n), *mask, "softmax");
  auto out = zeros(x->shape);
  std::vector<bool> mask_copy = mask ? *mask : std::vector<bool>();
  const std::vector<bool>* m = mask ? &mask_copy : nullptr;
  softmax_span(x->values.data(), out->values.data(), n, m, 0);
  if (taping({&x})) {
    record(out, [x, out, n, mask_copy = std::move(mask_copy), has_mask = (mask != nullptr)] {
      softmax_backward_span(out->values.data(), out->grad.data(), x->grad.data(), n,
                            has_mask ? &mask_copy : nullptr, 0);
    });
  }
  return out;
}

TensorPtr softmax_rows(const TensorPtr& a, const std::vector<bool>* key_mask) {
  if (a->rank() != 2) throw ShapeError("softmax_rows: expects rank-2, got " + shape_str(a->shape));
  const int m = a->rows(), n = a->cols();
  if (key_mask) check_mask_len(static_cast<std::size_t>(n), *key_mask, "softmax_rows");
  auto out = zeros(a->shape);
  std::vector<bool> mask_copy = key_mask ? *key_mask : std::vector<bool>();
  const std::vector<bool>* km = key_mask ? &mask_copy : nullptr;
  for (int i = 0; i < m; ++i) {
    softmax_span(a->values.data() + static_cast<std::size_t>(i) * n,
                 out->values.data() + static_cast<std::size_t>(i) * n, n, km, 0);
  }
  if (taping({&a})) {
    record(out, [a, out, m, n, mask_copy = std::move(mask_copy), has_mask = (key_mask != nullptr)] {
      for (int i = 0; i < m; ++i) {
        softmax_backward_span(out->values.data() + static_cast<std::size_t>(i) * n,
                              out->grad.data() + static_cast<std::size_t>(i) * n,
                              a->grad.data() + static_cast<std::size_t>(i) * n, n,
                              has_mask ? &mask_copy : nullptr, 0);
      }
    });
  }
  return out;
}

TensorPtr mask_rows(const TensorPtr& a, const std::vector<bool>& keep) {
  const int m = a->rows(), n = a->cols();
  check_mask_len(static_cast<std::size_t>(m), keep, "mask_rows");
  auto out = zeros(a->shape);
  for (int i = 0; i < m; ++i) {
    if (!keep[static_cast<std::size_t>(i)]) continue;
    for (int j = 0; j < n; ++j) out->at(i, j) = a->at(i, j);
  }
  if (taping({&a})) {
    record(out, [a, out, keep, m, n] {
      for (int i = 0; i < m; ++i) {
        if (!keep[static_cast<std::size_t>(i)]) continue;
        for (int j = 0; j < n; ++j) a->grad_at(i, j) += out->grad[static_cast<std::size_t>(i) * n + j];
      }
    });
  }
  return out;
}

TensorPtr concat(const std::vector<TensorPtr>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const int rank = parts[0]->rank();
  if (axis < 0 || axis >= rank) throw ShapeError("concat: axis out of range");
  for (const auto& p : parts) {
    if (p->rank() != rank) throw ShapeError("concat: mixed ranks");
  }

  TensorPtr out;
  if (rank == 1) {
    int total = 0;
    for (const auto& p : parts) total += p->numel();
    out = zeros({total});
    int off = 0;
    for (const auto& p : parts) {
      std::copy(p->values.begin(), p->values.end(), out->values.begin() + off);
      off += p->numel();
    }
  } else if (rank == 2 && axis == 0) {
    const int n = parts[0]->cols();
    int rows = 0;
    for (const auto& p : parts) {
      if (p->cols() != n) throw ShapeError("concat axis 0: column counts differ");
      rows += p->rows();
    }
    out = zeros({rows, n});
    std::size_t off = 0;
    for (const auto& p : parts) {
      std::copy(p->values.begin(), p->values.end(), out->values.begin() + off);
      off += p->values.size();
    }
  } else if (rank == 2 && axis == 1) {
    const int m = parts[0]->rows();
    int cols = 0;
    for (const auto& p : parts) {
      if (p->rows() != m) throw ShapeError("concat axis 1: row counts differ");
      cols += p->cols();
    }
    out = zeros({m, cols});
    int coff = 0;
    for (const auto& p : parts) {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < p->cols(); ++j) out->at(i, coff + j) = p->at(i, j);
      coff += p->cols();
    }
  } else {
    throw ShapeError("concat: unsupported rank " + std::to_string(rank));
  }

  bool any_grad = false;
  for (const auto& p : parts) any_grad = any_grad || p->requires_grad;
  if (Tape::active() && any_grad) {
    record(out, [parts, out, rank, axis] {
      if (rank == 1 || axis == 0) {
        std::size_t off = 0;
        for (const auto& p : parts) {
          if (p->requires_grad) {
            for (std::size_t i = 0; i < p->values.size(); ++i) p->grad[i] += out->grad[off + i];
          }
          off += p->values.size();
        }
      } else {
        int coff = 0;
        const int cols = out->cols();
        for (const auto& p : parts) {
          if (p->requires_grad) {
            for (int i = 0; i < p->rows(); ++i)
              for (int j = 0; j < p->cols(); ++j)
                p->grad_at(i, j) += out->grad[static_cast<std::size_t>(i) * cols + coff + j];
          }
          coff += p->cols();
        }
      }
    });
  }
  return out;
}

TensorPtr stack_rows(const std::vector<TensorPtr>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no inputs");
  const int d = rows[0]->numel();
  for (const auto& r : rows) {
    if (r->rank() != 1 || r->numel() != d) {
      throw ShapeError("stack_rows: expected vectors of length " + std::to_string(d) +
                       ", got " + shape_str(r->shape));
    }
  }
  const int n = static_cast<int>(rows.size());
  auto out = zeros({n, d});
  for (int i = 0; i < n; ++i)
    std::copy(rows[static_cast<std::size_t>(i)]->values.begin(),
              rows[static_cast<std::size_t>(i)]->values.end(),
              out->values.begin() + static_cast<std::size_t>(i) * d);
  bool any_grad = false;
  for (const auto& r : rows) any_grad = any_grad || r->requires_grad;
  if (Tape::active() && any_grad) {
    record(out, [rows, out, n, d] {
      for (int i = 0; i < n; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        if (!r->requires_grad) continue;
        for (int j = 0; j < d; ++j) r->grad[j] += out->grad[static_cast<std::size_t>(i) * d + j];
      }
    });
  }
  return out;
}

TensorPtr row(const TensorPtr& a, int i) {
  const int m = a->rows(), n = a->cols();
  if (i < 0 || i >= m) throw ShapeError("row: index " + std::to_string(i) + " out of range");
  auto out = zeros({n});
  std::copy(a->values.begin() + static_cast<std::size_t>(i) * n,
            a->values.begin() + static_cast<std::size_t>(i + 1) * n, out->values.begin());
  if (taping({&a})) {
    record(out, [a, out, i, n] {
      for (int j = 0; j < n; ++j) a->grad[static_cast<std::size_t>(i) * n + j] += out->grad[j];
    });
  }
  return out;
}

TensorPtr weighted_sum(const TensorPtr& h, const TensorPtr& w) {
  if (h->rank() != 2 || w->rank() != 1 || h->rows() != w->numel()) {
    throw ShapeError("weighted_sum: got " + shape_str(h->shape) + " and " +
                     shape_str(w->shape));
  }
  const int rows = h->rows(), d = h->cols();
  auto out = zeros({d});
  for (int l = 0; l < rows; ++l) {
    const double wl = w->values[l];
    if (wl == 0.0) continue;
    const double* hrow = h->values.data() + static_cast<std::size_t>(l) * d;
    for (int j = 0; j < d; ++j) out->values[j] += wl * hrow[j];
  }
  if (taping({&h, &w})) {
    record(out, [h, w, out, rows, d] {
      const double* dy = out->grad.data();
      if (h->requires_grad) {
        for (int l = 0; l < rows; ++l) {
          const double wl = w->values[l];
          if (wl == 0.0) continue;
          double* dhrow = h->grad.data() + static_cast<std::size_t>(l) * d;
          for (int j = 0; j < d; ++j) dhrow[j] += wl * dy[j];
        }
      }
      if (w->requires_grad) {
        for (int l = 0; l < rows; ++l) {
          const double* hrow = h->values.data() + static_cast<std::size_t>(l) * d;
          double acc = 0.0;
          for (int j = 0; j < d; ++j) acc += hrow[j] * dy[j];
          w->grad[l] += acc;
        }
      }
    });
  }
  return out;
}

TensorPtr embedding_lookup(const TensorPtr& table, const std::vector<int>& ids) {
  if (table->rank() != 2) {
    throw ShapeError("embedding_lookup: table must be rank-2, got " + shape_str(table->shape));
  }
  const int v = table->rows(), d = table->cols();
  for (int id : ids) {
    if (id < 0 || id >= v) {
      throw std::out_of_range("embedding_lookup: id " + std::to_string(id) +
                              " outside vocabulary of size " + std::to_string(v));
    }
  }
  const int n = static_cast<int>(ids.size());
  auto out = zeros({n, d});
  for (int i = 0; i < n; ++i)
    std::copy(table->values.begin() + static_cast<std::size_t>(ids[static_cast<std::size_t>(i)]) * d,
              table->values.begin() + static_cast<std::size_t>(ids[static_cast<std::size_t>(i)] + 1) * d,
              out->values.begin() + static_cast<std::size_t>(i) * d);
  if (taping({&table})) {
    record(out, [table, out, ids, n, d] {
      for (int i = 0; i < n; ++i) {
        double* trow = table->grad.data() + static_cast<std::size_t>(ids[static_cast<std::size_t>(i)]) * d;
        const double* orow = out->grad.data() + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < d; ++j) trow[j] += orow[j];
      }
    });
  }
  return out;
}

TensorPtr dot(const TensorPtr& a, const TensorPtr& b) {
  if (a->rank() != 1 || b->rank() != 1 || a->numel() != b->numel()) {
    throw ShapeError("dot: got " + shape_str(a->shape) + " and " + shape_str(b->shape));
  }
  double acc = 0.0;
  for (int i = 0; i < a->numel(); ++i) acc += a->values[i] * b->values[i];
  auto out = scalar(acc);
  if (taping({&a, &b})) {
    record(out, [a, b, out] {
      const double g = out->grad[0];
      if (a->requires_grad)
        for (int i = 0; i < a->numel(); ++i) a->grad[i] += g * b->values[i];
      if (b->requires_grad)
        for (int i = 0; i < b->numel(); ++i) b->grad[i] += g * a->values[i];
    });
  }
  return out;
}

TensorPtr sum(const TensorPtr& a) {
  double acc = 0.0;
  for (double v : a->values) acc += v;
  auto out = scalar(acc);
  if (taping({&a})) {
    record(out, [a, out] {
      const double g = out->grad[0];
      for (int i = 0; i < a->numel(); ++i) a->grad[i] += g;
    });
  }
  return out;
}

TensorPtr logsumexp(const TensorPtr& x) {
  if (x->rank() != 1 || x->numel() == 0) {
    throw ShapeError("logsumexp: expects a non-empty vector, got " + shape_str(x->shape));
  }
  const int n = x->numel();
  double mx = x->values[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, x->values[i]);
  double z = 0.0;
  for (int i = 0; i < n; ++i) z += std::exp(x->values[i] - mx);
  auto out = scalar(mx + std::log(z));
  if (taping({&x})) {
    record(out, [x, out, n, mx, z] {
      const double g = out->grad[0];
      for (int i = 0; i < n; ++i) x->grad[i] += g * std::exp(x->values[i] - mx) / z;
    });
  }
  return out;
}

double grad_check(const std::function<TensorPtr(const TensorPtr&)>& f,
                  const TensorPtr& x, double step) {
  if (step <= 0.0) throw std::invalid_argument("grad_check: step must be positive");

  std::vector<double> analytic;
  {
    Tape tape;
    const bool was_grad = x->requires_grad;
    x->set_requires_grad(true);
    TensorPtr loss = f(x);
    tape.backward(loss);
    analytic = x->grad;
    x->set_requires_grad(was_grad);
  }

  double worst = 0.0;
  {
    NoTape off;
    for (int i = 0; i < x->numel(); ++i) {
      const double saved = x->values[i];
      x->values[i] = saved + step;
      const double up = f(x)->item();
      x->values[i] = saved - step;
      const double down = f(x)->item();
      x->values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[static_cast<std::size_t>(i)];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      worst = std::max(worst, std::fabs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace mins
