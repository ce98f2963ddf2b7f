#pragma once

// Multiplication-free inference.
//
// A multi-threshold neuron emits one binary spike map per threshold. Because
// convolution is linear, the convolution of the summed spikes equals the sum
// of per-threshold convolutions, and each of those only adds kernel entries
// at active spike positions. The kernels below do exactly that and report
// their work to the op counter under "accum:<layer>" tags.
//
// Batch norm after a spike-input layer is folded into the kernel (scale) and
// an added per-channel constant (shift); average pooling in front of a layer
// is folded the same way, with each input spike mapped to its pooled cell.
// The folds run once per model under the "bn_fold" tag. The encoder sees
// real-valued pixels and runs densely under "encoder"; neuron updates are
// reported under "neuron" and the output averaging under "readout".

#include <cstddef>
#include <string>
#include <vector>

#include "mtsnn/model.hpp"
#include "mtsnn/op_counter.hpp"
#include "mtsnn/ops.hpp"

namespace mtsnn {

struct AccumOptions {
  /// Fault injection for mutation tests: performs the first accumulation as
  /// a multiply-add, which the op counter must catch.
  bool inject_multiply = false;
};

/// Scatter-add convolution of a binary [n, c, h, w] spike map. With pool > 1
/// the spikes are at pool x the kernel's input resolution; spike (y, x) lands
/// in cell (y / pool, x / pool) and the kernel must already carry the 1/pool^2
/// factor. Throws std::invalid_argument for non-binary input.
template <typename T>
Tensor<T> accum_conv(const Tensor<T>& spikes, const Tensor<T>& kernel, Conv2dOptions options, std::size_t pool = 1,
                     AccumOptions fault = {});

/// Scatter-add dense layer, no bias. spikes is [n, in] or, with pooling,
/// [n, c, h, w] whose pooled flattening has `in` features.
template <typename T>
Tensor<T> accum_fc(const Tensor<T>& spikes, const Tensor<T>& weight, std::size_t pool = 1, AccumOptions fault = {});

struct EquivalenceReport {
  double max_abs_diff = 0;
  double tolerance = 0;
  bool passed = false;
  std::size_t thresholds = 0;
  OpCount dense;        // conv of the summed spikes
  OpCount accumulated;  // per-threshold scatter-adds plus their sum
};

/// Fires H at V_th and every V_th + delta, then compares conv(S_sum) against
/// the sum of accum_conv over the binary maps. Tolerance 1e-5 at 32 bits and
/// 1e-12 at 64 bits. Opens its own op counter scopes.
template <typename T>
EquivalenceReport mt_equivalence_check(const Tensor<T>& h, T v_th, std::span<const double> deltas,
                                       const Tensor<T>& kernel, Conv2dOptions options = {});

template <typename T>
struct MfreeResult {
  StepOutputs<T> outputs;
  OpCounts counts;
};

/// Eval-mode forward of a spiking model using only accumulation in spike-input
/// layers. Throws for relu (non-spiking) models.
template <typename T>
MfreeResult<T> run_inference_mfree(const Model<T>& model, const Tensor<T>& input, AccumOptions fault = {});

/// True when a tag names a spike-input accumulation kernel.
bool is_accumulation_tag(const std::string& tag);

}  // namespace mtsnn
