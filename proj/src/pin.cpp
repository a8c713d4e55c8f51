#include "mins/pin.hpp"

#include <cmath>

#include "mins/error.hpp"
#include "mins/ops.hpp"

namespace mins {

namespace {

bool any_true(const std::vector<bool>& mask) {
  for (bool b : mask)
    if (b) return true;
  return false;
}

}  // namespace

std::vector<TensorPtr> detect_interests(const TensorPtr& session, const std::vector<bool>& mask,
                                        const PinParams& params) {
  const int d = session->cols();
  const int k = static_cast<int>(params.detector.size());
  if (k == 0 || d % k != 0) {
    throw ConfigError("detect_interests: " + std::to_string(k) +
                      " heads do not divide dimension " + std::to_string(d));
  }
  if (!any_true(mask)) throw DegenerateInputError("detect_interests: empty session");

  const int dh = d / k;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<TensorPtr> streams;
  streams.reserve(params.detector.size());
  for (const auto& head : params.detector) {
    auto q = matmul(session, head.query);  // [T×dh]
    auto kx = matmul(session, head.key);
    auto v = matmul(session, head.value);
    auto weights = softmax_rows(scale(matmul(q, transpose(kx)), att_scale), &mask);
    streams.push_back(mask_rows(matmul(weights, v), mask));
  }
  return streams;
}

TensorPtr gru_step(const TensorPtr& interest, const TensorPtr& prev_state,
                   const GruChannelParams& channel) {
  auto joint = concat({interest, prev_state}, 0);
  auto reset = sigmoid(matvec(channel.reset, joint));
  auto update = sigmoid(matvec(channel.update, joint));
  auto gated = concat({interest, mul(prev_state, reset)}, 0);
  auto candidate = tanh(matvec(channel.candidate, gated));
  return add(mul(one_minus(update), prev_state), mul(update, candidate));
}

std::vector<TensorPtr> run_channels(const std::vector<TensorPtr>& interests,
                                    const std::vector<bool>& mask, const PinParams& params) {
  if (interests.size() != params.channels.size()) {
    throw ConfigError("run_channels: " + std::to_string(interests.size()) +
                      " interest streams for " + std::to_string(params.channels.size()) +
                      " channels");
  }
  const int k = static_cast<int>(params.channels.size());
  std::vector<TensorPtr> finals;
  finals.reserve(params.channels.size());
  for (int i = 0; i < k; ++i) {
    const auto& stream = interests[static_cast<std::size_t>(i)];
    const int steps = stream->rows();
    TensorPtr state = zeros({params.channels[static_cast<std::size_t>(i)].reset->rows()});
    for (int t = 0; t < steps; ++t) {
      if (!mask[static_cast<std::size_t>(t)]) continue;  // padded step, state carried through
      state = gru_step(row(stream, t), state, params.channels[static_cast<std::size_t>(i)]);
    }
    finals.push_back(state);
  }
  return finals;
}

TensorPtr fuse_session(const std::vector<TensorPtr>& final_states, const PinParams& params) {
  if (final_states.empty()) throw DegenerateInputError("fuse_session: no channel states");
  if (final_states.size() == 1) return final_states[0];
  return additive_attention(stack_rows(final_states), nullptr, params.fusion);
}

TensorPtr session_vector(const TensorPtr& session, const std::vector<bool>& mask,
                         const PinParams& params) {
  auto streams = detect_interests(session, mask, params);
  auto finals = run_channels(streams, mask, params);
  return fuse_session(finals, params);
}

}  // namespace mins
