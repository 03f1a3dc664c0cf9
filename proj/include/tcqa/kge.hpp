#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tcqa/kg.hpp"

namespace tcqa {

/// ComplEx embeddings: each entity/relation row stores dim real parts
/// followed by dim imaginary parts (2*dim doubles). Scores are the real part
/// of the trilinear form <e_h, w_r, conj(e_t)>.
class KgeModel {
 public:
  KgeModel() = default;
  KgeModel(std::uint32_t num_entities, std::uint32_t num_relations, std::uint32_t dim);

  std::uint32_t num_entities() const { return num_entities_; }
  std::uint32_t num_relations() const { return num_relations_; }
  std::uint32_t dim() const { return dim_; }

  std::span<const double> entity(std::uint32_t e) const {
    return {entity_.data() + static_cast<std::size_t>(e) * 2 * dim_, 2 * dim_};
  }
  std::span<const double> relation(std::uint32_t r) const {
    return {relation_.data() + static_cast<std::size_t>(r) * 2 * dim_, 2 * dim_};
  }
  std::span<double> entity(std::uint32_t e) {
    return {entity_.data() + static_cast<std::size_t>(e) * 2 * dim_, 2 * dim_};
  }
  std::span<double> relation(std::uint32_t r) {
    return {relation_.data() + static_cast<std::size_t>(r) * 2 * dim_, 2 * dim_};
  }
  std::vector<double>& entity_data() { return entity_; }
  std::vector<double>& relation_data() { return relation_; }

  double score(std::uint32_t h, std::uint32_t r, std::uint32_t t) const;

  /// f_r(h, .) over all entities.
  std::vector<double> score_row(std::uint32_t h, std::uint32_t r) const;

  /// Binary format: magic TKGE, u32 entity/relation counts and dim, then
  /// row-major f32 blocks (entities first). Values round-trip exactly.
  void save(const std::string& path) const;
  static KgeModel load(const std::string& path);

 private:
  std::uint32_t num_entities_ = 0;
  std::uint32_t num_relations_ = 0;
  std::uint32_t dim_ = 0;
  std::vector<double> entity_;
  std::vector<double> relation_;
};

struct KgeConfig {
  std::uint32_t dim = 32;
  std::uint32_t epochs = 200;
  std::uint32_t batch_size = 256;
  double learning_rate = 0.1;  // Adagrad
  double n3_weight = 1e-3;
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

struct KgeTrainResult {
  KgeModel model;
  std::vector<double> epoch_loss;  // mean per-triple loss per epoch
};

/// Trains ComplEx by full-vocabulary softmax cross-entropy over tail
/// prediction with N3 regularization; reciprocal triples in the train split
/// supply the head-prediction direction. Deterministic for a fixed seed.
KgeTrainResult train_kge(const KnowledgeGraph& kg, const KgeConfig& config);

/// Mean loss of a triple batch (cross-entropy + N3 term); the quantity
/// train_kge descends. Exposed so gradients can be finite-difference checked.
double kge_batch_loss(const KgeModel& model, std::span<const Triple> batch,
                      double n3_weight);

/// Accumulates d(batch mean loss)/d(embeddings) into dense buffers shaped
/// like the model's entity/relation storage. Buffers must be pre-zeroed.
void kge_batch_grad(const KgeModel& model, std::span<const Triple> batch,
                    double n3_weight, std::vector<double>& entity_grad,
                    std::vector<double>& relation_grad);

}  // namespace tcqa
