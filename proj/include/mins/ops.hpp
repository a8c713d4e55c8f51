#pragma once

#include <functional>
#include <vector>

#include "mins/tensor.hpp"

namespace mins {

// All ops compute forward immediately and, while a Tape is active and any
// input requires grad, record a closure that accumulates input gradients
// from the output gradient.

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);   // [m×k]·[k×n]
TensorPtr matvec(const TensorPtr& w, const TensorPtr& x);   // [m×n]·[n]
TensorPtr transpose(const TensorPtr& a);

TensorPtr add(const TensorPtr& a, const TensorPtr& b);      // elementwise
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);      // Hadamard
TensorPtr scale(const TensorPtr& a, double c);
TensorPtr one_minus(const TensorPtr& a);                    // 1 - a
TensorPtr add_rowwise(const TensorPtr& m, const TensorPtr& b);  // [L×n] + [n] per row

TensorPtr sigmoid(const TensorPtr& a);
TensorPtr tanh(const TensorPtr& a);

// Max-subtraction stabilized softmax over a vector. Masked entries are
// exactly zero in the output and receive zero gradient. Requires at least
// one unmasked entry.
TensorPtr softmax(const TensorPtr& x, const std::vector<bool>* mask = nullptr);

// Row-wise softmax of a matrix; key_mask (over columns) applies to every row.
TensorPtr softmax_rows(const TensorPtr& a, const std::vector<bool>* key_mask = nullptr);

// Zeroes rows whose keep flag is false.
TensorPtr mask_rows(const TensorPtr& a, const std::vector<bool>& keep);

// Concatenate same-rank tensors along axis 0 or 1.
TensorPtr concat(const std::vector<TensorPtr>& parts, int axis);

// Stack n vectors of equal length d into an [n×d] matrix.
TensorPtr stack_rows(const std::vector<TensorPtr>& rows);

TensorPtr row(const TensorPtr& a, int i);                   // [m×n] -> [n]

// Σ_l w_l · h_l over the rows of h ([L×d], weights [L]) -> [d].
TensorPtr weighted_sum(const TensorPtr& h, const TensorPtr& w);

// Gathers table rows by id -> [ids.size()×d]. Backward scatters into the
// looked-up rows only.
TensorPtr embedding_lookup(const TensorPtr& table, const std::vector<int>& ids);

TensorPtr dot(const TensorPtr& a, const TensorPtr& b);      // -> scalar
TensorPtr sum(const TensorPtr& a);                          // -> scalar
TensorPtr logsumexp(const TensorPtr& x);                    // vector -> scalar

// Max over elements of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8),
// comparing the taped gradient of f at x against central finite differences
// with the given step. f must be a deterministic map to a scalar tensor.
double grad_check(const std::function<TensorPtr(const TensorPtr&)>& f,
                  const TensorPtr& x, double step);

}  // namespace mins
