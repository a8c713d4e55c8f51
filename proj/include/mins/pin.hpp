#pragma once

#include <vector>

#include "mins/encoder.hpp"
#include "mins/tensor.hpp"

namespace mins {

// One interest channel's GRU weights. Each matrix maps the concatenation
// [interest, state] (dh + d wide) to the d-dim hidden state; the gates carry
// no bias terms.
struct GruChannelParams {
  TensorPtr reset;      // [d×(dh+d)]
  TensorPtr update;     // [d×(dh+d)]
  TensorPtr candidate;  // [d×(dh+d)]
};

/// Parallel-channel interest network: k detector heads route one interest
/// stream each into k independent GRU channels whose final states are fused
/// by additive attention into the session vector.
struct PinParams {
  std::vector<AttentionHeadParams> detector;  // k heads, projections [d×(d/k)]
  std::vector<GruChannelParams> channels;     // k channels
  AdditiveAttentionParams fusion;
};

// Per-head self-attention over the session's news vectors [T×d]. Head i's
// output is its interest stream [T×(d/k)]; there is no output projection, so
// heads stay separable. Masked steps are excluded as keys and zeroed as
// queries.
std::vector<TensorPtr> detect_interests(const TensorPtr& session, const std::vector<bool>& mask,
                                        const PinParams& params);

// One GRU update: reset and update gates from [interest, state], candidate
// state from [interest, state ⊙ reset], new state as the update-gated blend.
TensorPtr gru_step(const TensorPtr& interest, const TensorPtr& prev_state,
                   const GruChannelParams& channel);

// Folds gru_step over the unmasked steps of every channel (zero initial
// state) and returns the k final states.
std::vector<TensorPtr> run_channels(const std::vector<TensorPtr>& interests,
                                    const std::vector<bool>& mask, const PinParams& params);

// Additive-attention blend of the channel final states.
TensorPtr fuse_session(const std::vector<TensorPtr>& final_states, const PinParams& params);

// detect → run → fuse. Throws DegenerateInputError on an all-masked session;
// the caller decides the cold-start fallback.
TensorPtr session_vector(const TensorPtr& session, const std::vector<bool>& mask,
                         const PinParams& params);

}  // namespace mins
