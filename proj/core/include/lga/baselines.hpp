#pragma once

#include "lga/tensor.hpp"

namespace lga {

/// Query/key/value projections for the reference attention baselines.
/// Criss-cross recurrence requires value channels equal to input channels so
/// passes compose.
struct AttentionParams {
  GroupedLinear query;  // C -> C_qk
  GroupedLinear key;    // C -> C_qk
  GroupedLinear value;  // C -> C_v
  int recurrence = 2;   // criss-cross only

  static AttentionParams random(int c, int c_qk, int c_v, std::mt19937_64& rng,
                                int recurrence = 2, double scale = 0.5);
};

/// softmax(Q K^T) V over all N x N pairs. Oracle/benchmark path.
FeatureMap dense_attention(const FeatureMap& x, const AttentionParams& p);

/// Per position, affinity with the H+W-1 positions sharing its row or column
/// (self counted once), softmax, aggregate values; repeated `recurrence`
/// times on the updated features.
FeatureMap crisscross_attention(const FeatureMap& x, const AttentionParams& p);

// Attention-only kernels (Q, K, V precomputed) used by the scaling benchmark
// so the fitted exponent isolates the propagation term.
NodeMatrix dense_attention_core(const NodeMatrix& q, const NodeMatrix& k,
                                const NodeMatrix& v);
NodeMatrix crisscross_attention_core(const NodeMatrix& q, const NodeMatrix& k,
                                     const NodeMatrix& v, int height,
                                     int width);

}  // namespace lga
