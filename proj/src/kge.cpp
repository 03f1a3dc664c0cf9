#include "tcqa/kge.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "tcqa/binio.hpp"
#include "tcqa/parallel.hpp"

namespace tcqa {

namespace {
constexpr char kModelMagic[4] = {'T', 'K', 'G', 'E'};
constexpr std::size_t kGradChunks = 8;  // fixed so merges are thread-count independent
}  // namespace

KgeModel::KgeModel(std::uint32_t num_entities, std::uint32_t num_relations,
                   std::uint32_t dim)
    : num_entities_(num_entities),
      num_relations_(num_relations),
      dim_(dim),
      entity_(static_cast<std::size_t>(num_entities) * 2 * dim, 0.0),
      relation_(static_cast<std::size_t>(num_relations) * 2 * dim, 0.0) {}

double KgeModel::score(std::uint32_t h, std::uint32_t r, std::uint32_t t) const {
  auto eh = entity(h);
  auto wr = relation(r);
  auto et = entity(t);
  const std::uint32_t d = dim_;
  double s = 0.0;
  for (std::uint32_t k = 0; k < d; ++k) {
    double ure = eh[k] * wr[k] - eh[d + k] * wr[d + k];
    double uim = eh[k] * wr[d + k] + eh[d + k] * wr[k];
    s += ure * et[k] + uim * et[d + k];
  }
  return s;
}

std::vector<double> KgeModel::score_row(std::uint32_t h, std::uint32_t r) const {
  const std::uint32_t d = dim_;
  auto eh = entity(h);
  auto wr = relation(r);
  std::vector<double> u(2 * d);
  for (std::uint32_t k = 0; k < d; ++k) {
    u[k] = eh[k] * wr[k] - eh[d + k] * wr[d + k];
    u[d + k] = eh[k] * wr[d + k] + eh[d + k] * wr[k];
  }
  std::vector<double> scores(num_entities_);
  for (std::uint32_t j = 0; j < num_entities_; ++j) {
    auto et = entity(j);
    double s = 0.0;
    for (std::uint32_t k = 0; k < d; ++k) {
      s += u[k] * et[k] + u[d + k] * et[d + k];
    }
    scores[j] = s;
  }
  return scores;
}

void KgeModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open output file: " + path);
  binio::write_magic(out, kModelMagic);
  binio::write_u32(out, num_entities_);
  binio::write_u32(out, num_relations_);
  binio::write_u32(out, dim_);
  for (double v : entity_) binio::write_f32(out, static_cast<float>(v));
  for (double v : relation_) binio::write_f32(out, static_cast<float>(v));
  if (!out) throw IoError("write failed: " + path);
}

KgeModel KgeModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file: " + path);
  binio::expect_magic(in, kModelMagic, "model");
  std::uint32_t v = binio::read_u32(in);
  std::uint32_t r = binio::read_u32(in);
  std::uint32_t d = binio::read_u32(in);
  KgeModel model(v, r, d);
  for (double& x : model.entity_) x = binio::read_f32(in);
  for (double& x : model.relation_) x = binio::read_f32(in);
  return model;
}

namespace {

struct TripleLossGrad {
  // dense accumulation buffers shaped like the model storage
  std::vector<double> entity_grad;
  std::vector<double> relation_grad;
  double loss_sum = 0.0;
};

// Cross-entropy + N3 for one triple, accumulated unnormalized.
void accumulate_triple(const KgeModel& model, const Triple& triple, double n3_weight,
                       std::vector<double>* entity_grad,
                       std::vector<double>* relation_grad, double& loss_sum) {
  const std::uint32_t d = model.dim();
  const std::uint32_t num_entities = model.num_entities();
  auto eh = model.entity(triple.head);
  auto wr = model.relation(triple.relation);

  std::vector<double> u(2 * d);
  for (std::uint32_t k = 0; k < d; ++k) {
    u[k] = eh[k] * wr[k] - eh[d + k] * wr[d + k];
    u[d + k] = eh[k] * wr[d + k] + eh[d + k] * wr[k];
  }

  std::vector<double> z(num_entities);
  double zmax = -std::numeric_limits<double>::infinity();
  for (std::uint32_t j = 0; j < num_entities; ++j) {
    auto et = model.entity(j);
    double s = 0.0;
    for (std::uint32_t k = 0; k < d; ++k) {
      s += u[k] * et[k] + u[d + k] * et[d + k];
    }
    z[j] = s;
    zmax = std::max(zmax, s);
  }
  double sum_exp = 0.0;
  for (std::uint32_t j = 0; j < num_entities; ++j) sum_exp += std::exp(z[j] - zmax);
  double lse = zmax + std::log(sum_exp);
  loss_sum += lse - z[triple.tail];

  // N3 penalty on the positive triple's three factors
  auto n3_term = [&](std::span<const double> v, std::span<double> g) {
    double s = 0.0;
    for (std::uint32_t k = 0; k < d; ++k) {
      double mag = std::hypot(v[k], v[d + k]);
      s += mag * mag * mag;
      if (!g.empty() && mag > 0.0) {
        g[k] += n3_weight * 3.0 * mag * v[k];
        g[d + k] += n3_weight * 3.0 * mag * v[d + k];
      }
    }
    return s;
  };

  std::span<double> no_grad;
  if (entity_grad == nullptr) {
    loss_sum += n3_weight * (n3_term(eh, no_grad) + n3_term(wr, no_grad) +
                             n3_term(model.entity(triple.tail), no_grad));
    return;
  }

  auto ent_g = [&](std::uint32_t e) {
    return std::span<double>(entity_grad->data() + static_cast<std::size_t>(e) * 2 * d,
                             2 * d);
  };
  auto rel_g = [&](std::uint32_t r) {
    return std::span<double>(relation_grad->data() + static_cast<std::size_t>(r) * 2 * d,
                             2 * d);
  };

  loss_sum += n3_weight * (n3_term(eh, ent_g(triple.head)) +
                           n3_term(wr, rel_g(triple.relation)) +
                           n3_term(model.entity(triple.tail), ent_g(triple.tail)));

  // softmax gradient: dL/dz_j = p_j - [j == tail]; flows into u and into
  // every candidate tail embedding
  std::vector<double> gu(2 * d, 0.0);
  for (std::uint32_t j = 0; j < num_entities; ++j) {
    double c = std::exp(z[j] - zmax) / sum_exp - (j == triple.tail ? 1.0 : 0.0);
    auto et = model.entity(j);
    auto gt = ent_g(j);
    for (std::uint32_t k = 0; k < d; ++k) {
      gu[k] += c * et[k];
      gu[d + k] += c * et[d + k];
      gt[k] += c * u[k];
      gt[d + k] += c * u[d + k];
    }
  }
  auto gh = ent_g(triple.head);
  auto gw = rel_g(triple.relation);
  for (std::uint32_t k = 0; k < d; ++k) {
    gh[k] += gu[k] * wr[k] + gu[d + k] * wr[d + k];
    gh[d + k] += -gu[k] * wr[d + k] + gu[d + k] * wr[k];
    gw[k] += gu[k] * eh[k] + gu[d + k] * eh[d + k];
    gw[d + k] += -gu[k] * eh[d + k] + gu[d + k] * eh[k];
  }
}

}  // namespace

double kge_batch_loss(const KgeModel& model, std::span<const Triple> batch,
                      double n3_weight) {
  double loss = 0.0;
  for (const Triple& t : batch) {
    accumulate_triple(model, t, n3_weight, nullptr, nullptr, loss);
  }
  return batch.empty() ? 0.0 : loss / static_cast<double>(batch.size());
}

void kge_batch_grad(const KgeModel& model, std::span<const Triple> batch,
                    double n3_weight, std::vector<double>& entity_grad,
                    std::vector<double>& relation_grad) {
  double loss = 0.0;
  for (const Triple& t : batch) {
    accumulate_triple(model, t, n3_weight, &entity_grad, &relation_grad, loss);
  }
  if (batch.empty()) return;
  double inv = 1.0 / static_cast<double>(batch.size());
  for (double& g : entity_grad) g *= inv;
  for (double& g : relation_grad) g *= inv;
}

KgeTrainResult train_kge(const KnowledgeGraph& kg, const KgeConfig& config) {
  if (!kg.finalized()) throw ContractError("train_kge: graph not finalized");
  const auto& train = kg.triples(Split::train);
  if (train.empty()) throw ContractError("train_kge: empty train split");
  if (config.dim < 1) throw ContractError("train_kge: dim must be >= 1");

  KgeModel model(kg.num_entities(), kg.num_relations(), config.dim);
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> init(-0.001, 0.001);
  for (double& v : model.entity_data()) v = init(rng);
  for (double& v : model.relation_data()) v = init(rng);

  const std::size_t param_entities = model.entity_data().size();
  const std::size_t param_relations = model.relation_data().size();
  std::vector<double> acc_entity(param_entities, 0.0);
  std::vector<double> acc_relation(param_relations, 0.0);
  constexpr double kAdagradEps = 1e-10;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  struct ChunkGrads {
    std::vector<double> entity, relation;
    double loss = 0.0;
  };
  std::vector<ChunkGrads> chunks(kGradChunks);
  for (auto& c : chunks) {
    c.entity.assign(param_entities, 0.0);
    c.relation.assign(param_relations, 0.0);
  }

  KgeTrainResult result;
  const unsigned threads = resolve_threads(config.threads);
  const std::size_t batch_size = std::max<std::uint32_t>(1, config.batch_size);

  for (std::uint32_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      std::size_t end = std::min(order.size(), start + batch_size);
      std::vector<Triple> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(train[order[i]]);

      auto ranges = chunk_ranges(batch.size(), kGradChunks);
      parallel_jobs(ranges.size(), threads, [&](std::size_t c) {
        auto& g = chunks[c];
        std::fill(g.entity.begin(), g.entity.end(), 0.0);
        std::fill(g.relation.begin(), g.relation.end(), 0.0);
        g.loss = 0.0;
        for (std::size_t i = ranges[c].first; i < ranges[c].second; ++i) {
          accumulate_triple(model, batch[i], config.n3_weight, &g.entity, &g.relation,
                            g.loss);
        }
      });

      double batch_loss = 0.0;
      double inv = 1.0 / static_cast<double>(batch.size());
      auto& total = chunks[0];
      for (std::size_t c = 1; c < ranges.size(); ++c) {
        for (std::size_t i = 0; i < param_entities; ++i)
          total.entity[i] += chunks[c].entity[i];
        for (std::size_t i = 0; i < param_relations; ++i)
          total.relation[i] += chunks[c].relation[i];
        total.loss += chunks[c].loss;
      }
      batch_loss = total.loss * inv;
      if (!std::isfinite(batch_loss)) {
        throw Error("train_kge: non-finite loss at epoch " + std::to_string(epoch) +
                    " (learning rate too high?)");
      }
      epoch_loss += total.loss;

      auto& ent = model.entity_data();
      auto& rel = model.relation_data();
      for (std::size_t i = 0; i < param_entities; ++i) {
        double g = total.entity[i] * inv;
        if (g == 0.0) continue;
        acc_entity[i] += g * g;
        ent[i] -= config.learning_rate * g / (std::sqrt(acc_entity[i]) + kAdagradEps);
      }
      for (std::size_t i = 0; i < param_relations; ++i) {
        double g = total.relation[i] * inv;
        if (g == 0.0) continue;
        acc_relation[i] += g * g;
        rel[i] -= config.learning_rate * g / (std::sqrt(acc_relation[i]) + kAdagradEps);
      }
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(train.size()));
  }
  result.model = std::move(model);
  return result;
}

}  // namespace tcqa
