// Command-line front end: one binary, one subcommand per pipeline stage.
#include <algorithm>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tcqa/adjacency.hpp"
#include "tcqa/eval.hpp"
#include "tcqa/executor.hpp"
#include "tcqa/kge.hpp"
#include "tcqa/query.hpp"
#include "tcqa/trainer.hpp"
#include "tcqa/type_graphs.hpp"

namespace {

using namespace tcqa;

KnowledgeGraph load_graph(const std::vector<std::string>& triple_files) {
  if (triple_files.empty() || triple_files.size() > 3) {
    throw Error("--triples takes 1 to 3 files (train [valid [test]])");
  }
  KnowledgeGraph kg;
  const Split splits[3] = {Split::train, Split::valid, Split::test};
  for (std::size_t i = 0; i < triple_files.size(); ++i) {
    kg.load_triples(triple_files[i], splits[i]);
  }
  kg.finalize_inverses();
  return kg;
}

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

AdapterHops parse_hops(const std::string& text) {
  if (text == "all") return AdapterHops::all;
  if (text == "first") return AdapterHops::first;
  if (text == "none") return AdapterHops::none;
  throw Error("--adapter-hops must be all, first, or none");
}

LoadedParams load_or_zero_params(const std::string& path,
                                 const NeuralAdjacencyMatrix& matrix) {
  LoadedParams params;
  if (path.empty()) {
    params.adapter = AdapterParams::zeros(matrix.num_relations());
    params.num_relations = matrix.num_relations();
    return params;
  }
  params = load_params(path, matrix.num_relations());
  for (const auto& [key, value] : params.calibration.scale) {
    std::uint32_t entity = pair_first(key);
    std::uint32_t relation = pair_second(key);
    if (entity >= matrix.num_entities() || relation >= matrix.num_relations() ||
        !matrix.rows(relation).head_present.test(entity)) {
      throw IoError("parameter file keys a row the matrix does not store");
    }
  }
  return params;
}

// ---- answer witness printing ----

void print_witness(std::ostream& os, const QueryNode& node, const TraceNode& trace,
                   std::uint32_t target, const KnowledgeGraph* kg, int depth) {
  std::string indent(static_cast<std::size_t>(depth) * 2, ' ');
  auto entity_name = [&](std::uint32_t e) {
    return kg != nullptr ? kg->entities().name(e) : std::to_string(e);
  };
  auto relation_name = [&](std::uint32_t r) {
    return kg != nullptr ? kg->relations().name(r) : std::to_string(r);
  };
  switch (node.op) {
    case QueryOp::anchor:
      os << indent << "anchor " << entity_name(node.entity) << "\n";
      return;
    case QueryOp::projection: {
      std::int32_t src = trace.projection->argmax_source[target];
      os << indent << (node.negated ? "not " : "") << relation_name(node.relation)
         << ": " << entity_name(target) << " <- ";
      if (src < 0) {
        os << "(no source)\n";
        return;
      }
      os << entity_name(static_cast<std::uint32_t>(src)) << "\n";
      print_witness(os, node.children[0], trace.children[0],
                    static_cast<std::uint32_t>(src), kg, depth + 1);
      return;
    }
    case QueryOp::conjunction:
      for (std::size_t c = 0; c < node.children.size(); ++c) {
        os << indent << "and[" << c << "]\n";
        print_witness(os, node.children[c], trace.children[c], target, kg, depth + 1);
      }
      return;
    case QueryOp::disjunction: {
      std::size_t best = 0;
      for (std::size_t c = 1; c < node.children.size(); ++c) {
        if (trace.children[c].output[target] > trace.children[best].output[target]) {
          best = c;
        }
      }
      os << indent << "or[" << best << "] (value "
         << trace.children[best].output[target] << ")\n";
      print_witness(os, node.children[best], trace.children[best], target, kg,
                    depth + 1);
      return;
    }
  }
}

// ---- subcommand option structs ----

struct TrainKgeOpts {
  std::vector<std::string> triples;
  std::string out;
  std::string vocab_out;
  KgeConfig config;
};

struct BuildAdjOpts {
  std::string model;
  std::vector<std::string> triples;
  std::string types;
  std::string out;
  std::string dump_compat;
  AdjacencyBuildConfig config;
};

struct GenQueriesOpts {
  std::vector<std::string> triples;
  std::string structures = "all";
  std::string split = "test";
  std::size_t count = 100;
  std::uint64_t seed = 0;
  std::string out;
};

struct TrainAdapterOpts {
  std::string matrix;
  std::string queries;
  std::string types;
  std::vector<std::string> triples;
  std::string out;
  std::string structures = "2i,3i,2in,3in";
  std::string adapter_hops = "all";
  AdapterTrainConfig config;
};

struct AnswerOpts {
  std::string matrix;
  std::string params;
  std::string query;
  std::vector<std::string> triples;
  std::string adapter_hops = "all";
  std::size_t topk = 10;
  bool trace = false;
  unsigned threads = 0;
};

struct EvaluateOpts {
  std::string matrix;
  std::string params;
  std::string queries;
  std::string report;
  std::string adapter_hops = "all";
  bool flat_average = false;
  unsigned threads = 0;
};

int run_train_kge(const TrainKgeOpts& opts) {
  KnowledgeGraph kg = load_graph(opts.triples);
  auto result = train_kge(kg, opts.config);
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    std::cout << e << '\t' << result.epoch_loss[e] << '\n';
  }
  result.model.save(opts.out);
  if (!opts.vocab_out.empty()) {
    dump_vocab(kg.entities(), opts.vocab_out + ".entities.tsv");
    dump_vocab(kg.relations(), opts.vocab_out + ".relations.tsv");
  }
  std::cerr << "wrote " << opts.out << " (entities " << kg.num_entities()
            << ", relations " << kg.num_relations() << ", dim " << opts.config.dim
            << ")\n";
  return 0;
}

int run_build_adjacency(const BuildAdjOpts& opts) {
  KnowledgeGraph kg = load_graph(opts.triples);
  TypeAnnotations types = load_types(opts.types, kg);
  if (types.skipped_unknown > 0) {
    std::cerr << "warning: skipped " << types.skipped_unknown
              << " type lines naming unknown entities\n";
  }
  auto graphs = build_type_graphs(kg, types);
  if (!graphs.report.tail_fallback_relations.empty()) {
    std::cerr << "note: " << graphs.report.tail_fallback_relations.size()
              << " relations fell back to observed tails (empty type intersection)\n";
  }
  KgeModel model = KgeModel::load(opts.model);
  if (model.num_entities() != kg.num_entities() ||
      model.num_relations() != kg.num_relations()) {
    throw Error("model dimensions do not match the loaded graph");
  }
  auto matrix = build_base_matrix(model, kg, graphs, opts.config);
  matrix.save(opts.out);
  if (!opts.dump_compat.empty()) dump_compat_tsv(graphs, kg, opts.dump_compat);
  auto report = matrix.storage_report();
  std::cout << "stored-entries\t" << report.stored_entries << '\n'
            << "skipped-rows\t" << report.skipped_rows << '\n'
            << "bytes\t" << report.bytes << '\n';
  return 0;
}

int run_gen_queries(const GenQueriesOpts& opts) {
  KnowledgeGraph kg = load_graph(opts.triples);
  Split split;
  if (opts.split == "train") {
    split = Split::train;
  } else if (opts.split == "valid") {
    split = Split::valid;
  } else if (opts.split == "test") {
    split = Split::test;
  } else {
    throw Error("--split must be train, valid, or test");
  }
  std::vector<std::string> labels = opts.structures == "all"
                                        ? query_structure_labels()
                                        : split_csv(opts.structures);
  std::vector<LabeledQuery> all;
  std::uint64_t seed = opts.seed;
  for (const auto& label : labels) {
    auto result = generate_queries(kg, label, opts.count, seed++, split);
    if (!result.complete) {
      std::cerr << "warning: " << label << ": generated " << result.queries.size()
                << "/" << opts.count << " queries within the retry budget\n";
    }
    for (auto& q : result.queries) all.push_back(std::move(q));
  }
  save_queries_jsonl(all, opts.out);
  std::cerr << "wrote " << all.size() << " queries to " << opts.out << "\n";
  return 0;
}

int run_train_adapter(const TrainAdapterOpts& opts) {
  NeuralAdjacencyMatrix matrix = NeuralAdjacencyMatrix::load(opts.matrix);
  if (!opts.types.empty()) {
    // consistency check: rebuild the type graphs and compare the tail masks
    // the trainer will rely on
    KnowledgeGraph kg = load_graph(opts.triples);
    TypeAnnotations types = load_types(opts.types, kg);
    auto graphs = build_type_graphs(kg, types);
    if (kg.num_relations() != matrix.num_relations() ||
        kg.num_entities() != matrix.num_entities()) {
      throw Error("matrix dimensions do not match the loaded graph");
    }
    for (std::uint32_t r = 0; r < matrix.num_relations(); ++r) {
      if (!(graphs.tail_compat[r] == matrix.rows(r).tail_compat)) {
        throw Error("type file disagrees with the matrix's tail compatibility masks");
      }
    }
  }
  IdResolver ids{matrix.num_entities(), matrix.num_relations(), nullptr, nullptr};
  auto queries = load_queries_jsonl(opts.queries, ids);
  AdapterTrainConfig config = opts.config;
  config.structures = split_csv(opts.structures);
  config.adapter_hops = parse_hops(opts.adapter_hops);
  TrainState state = train_adapter(matrix, queries, config);
  for (std::size_t e = 0; e < state.epoch_loss.size(); ++e) {
    std::cout << e << '\t' << state.epoch_loss[e] << '\n';
  }
  save_params(state.calibration, state.adapter, opts.out);
  std::cerr << "wrote " << opts.out << "\n";
  return 0;
}

int run_answer(const AnswerOpts& opts) {
  NeuralAdjacencyMatrix matrix = NeuralAdjacencyMatrix::load(opts.matrix);
  LoadedParams params = load_or_zero_params(opts.params, matrix);

  KnowledgeGraph kg;
  const KnowledgeGraph* names = nullptr;
  IdResolver ids{matrix.num_entities(), matrix.num_relations(), nullptr, nullptr};
  if (!opts.triples.empty()) {
    kg = load_graph(opts.triples);
    if (kg.num_entities() != matrix.num_entities() ||
        kg.num_relations() != matrix.num_relations()) {
      throw Error("matrix dimensions do not match the loaded graph");
    }
    ids = IdResolver::from(kg);
    names = &kg;
  }
  auto queries = load_queries_jsonl(opts.query, ids);

  ExecutionContext ctx;
  ctx.matrix = &matrix;
  ctx.calibration = &params.calibration;
  ctx.adapter = &params.adapter;
  ctx.adapter_hops = parse_hops(opts.adapter_hops);

  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const LabeledQuery& q = queries[qi];
    TraceNode trace;
    FuzzyVector out = execute(q.ast.root, ctx, opts.trace ? &trace : nullptr);
    std::vector<std::uint32_t> order(out.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
      return out[a] > out[b];
    });
    std::cout << "query " << qi;
    if (!q.ast.label.empty()) std::cout << " label=" << q.ast.label;
    std::cout << '\n';
    std::size_t k = std::min(opts.topk, order.size());
    for (std::size_t rank = 0; rank < k; ++rank) {
      std::uint32_t e = order[rank];
      std::cout << (rank + 1) << '\t'
                << (names != nullptr ? names->entities().name(e) : std::to_string(e))
                << '\t' << out[e] << '\n';
      if (opts.trace) print_witness(std::cout, q.ast.root, trace, e, names, 1);
    }
  }
  return 0;
}

int run_evaluate(const EvaluateOpts& opts) {
  NeuralAdjacencyMatrix matrix = NeuralAdjacencyMatrix::load(opts.matrix);
  LoadedParams params = load_or_zero_params(opts.params, matrix);
  IdResolver ids{matrix.num_entities(), matrix.num_relations(), nullptr, nullptr};
  auto queries = load_queries_jsonl(opts.queries, ids);

  EvalOptions options;
  options.flat_average = opts.flat_average;
  options.adapter_hops = parse_hops(opts.adapter_hops);
  options.threads = opts.threads;
  EvalReport report = evaluate(matrix, params.calibration, params.adapter, queries,
                               options);
  write_report_tsv(report, opts.report + ".tsv");
  write_report_json(report, opts.report + ".json");
  for (const auto& label : report.missing_structures) {
    std::cerr << "warning: no queries for structure " << label
              << "; omitted from aggregates\n";
  }
  auto show = [&](const char* name, const std::optional<double>& v) {
    std::cout << name << '\t';
    if (v) {
      std::cout << *v;
    } else {
      std::cout << "n/a";
    }
    std::cout << '\n';
  };
  show("avg_p", report.avg_p);
  show("avg_ood", report.avg_ood);
  show("avg_n", report.avg_n);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fuzzy-logic complex query answering over knowledge graphs"};
  app.require_subcommand(1);
  unsigned threads = 0;
  app.add_option("--threads", threads,
                 "worker threads (0 = all cores; TCQA_THREADS overrides)");

  TrainKgeOpts kge_opts;
  auto* kge_cmd = app.add_subcommand("train-kge", "train link-prediction embeddings");
  kge_cmd->add_option("--triples", kge_opts.triples, "triple TSVs: train [valid [test]]")
      ->required();
  kge_cmd->add_option("--out", kge_opts.out, "output model file")->required();
  kge_cmd->add_option("--dim", kge_opts.config.dim, "embedding dimension");
  kge_cmd->add_option("--epochs", kge_opts.config.epochs, "training epochs");
  kge_cmd->add_option("--batch", kge_opts.config.batch_size, "batch size");
  kge_cmd->add_option("--lr", kge_opts.config.learning_rate, "Adagrad learning rate");
  kge_cmd->add_option("--n3", kge_opts.config.n3_weight, "N3 regularization weight");
  kge_cmd->add_option("--seed", kge_opts.config.seed, "random seed");
  kge_cmd->add_option("--vocab-out", kge_opts.vocab_out, "vocab dump path prefix");

  BuildAdjOpts adj_opts;
  auto* adj_cmd = app.add_subcommand("build-adjacency",
                                     "materialize the sparse adjacency matrix");
  adj_cmd->add_option("--model", adj_opts.model, "model file")->required();
  adj_cmd->add_option("--triples", adj_opts.triples, "triple TSVs: train [valid [test]]")
      ->required();
  adj_cmd->add_option("--types", adj_opts.types, "entity type TSV")->required();
  adj_cmd->add_option("--out", adj_opts.out, "output matrix file")->required();
  adj_cmd->add_option("--eps", adj_opts.config.eps, "sparsification threshold");
  adj_cmd->add_option("--delta", adj_opts.config.delta, "probability clamp floor");
  adj_cmd->add_flag_callback("--no-type-skip",
                             [&] { adj_opts.config.type_skip = false; },
                             "compute every row (ablation)");
  adj_cmd->add_option("--dump-compat", adj_opts.dump_compat,
                      "write compatibility pairs TSV");

  GenQueriesOpts gen_opts;
  auto* gen_cmd = app.add_subcommand("gen-queries", "sample labeled queries");
  gen_cmd->add_option("--triples", gen_opts.triples, "triple TSVs: train [valid [test]]")
      ->required();
  gen_cmd->add_option("--out", gen_opts.out, "output JSONL file")->required();
  gen_cmd->add_option("--structures", gen_opts.structures,
                      "comma-separated labels or 'all'");
  gen_cmd->add_option("--split", gen_opts.split, "target split: train|valid|test");
  gen_cmd->add_option("--count", gen_opts.count, "queries per structure");
  gen_cmd->add_option("--seed", gen_opts.seed, "random seed");

  TrainAdapterOpts ta_opts;
  auto* ta_cmd = app.add_subcommand("train-adapter",
                                    "train calibration and adapter parameters");
  ta_cmd->add_option("--matrix", ta_opts.matrix, "adjacency matrix file")->required();
  ta_cmd->add_option("--queries", ta_opts.queries, "training queries JSONL")->required();
  ta_cmd->add_option("--out", ta_opts.out, "output parameter file")->required();
  auto* ta_types = ta_cmd->add_option("--types", ta_opts.types,
                                      "entity type TSV (cross-checked vs the matrix)");
  auto* ta_triples = ta_cmd->add_option("--triples", ta_opts.triples,
                                        "triple TSVs (needed with --types)");
  ta_types->needs(ta_triples);
  ta_cmd->add_option("--lr", ta_opts.config.learning_rate, "Adagrad learning rate");
  ta_cmd->add_option("--lr-decay", ta_opts.config.lr_decay, "per-epoch decay factor");
  ta_cmd->add_option("--epochs", ta_opts.config.epochs, "training epochs");
  ta_cmd->add_option("--batch", ta_opts.config.batch_size, "batch size");
  ta_cmd->add_option("--structures", ta_opts.structures, "training structure labels");
  ta_cmd->add_option("--seed", ta_opts.config.seed, "random seed");
  ta_cmd->add_option("--adapter-hops", ta_opts.adapter_hops, "all|first|none");

  AnswerOpts ans_opts;
  auto* ans_cmd = app.add_subcommand("answer", "rank answers for queries");
  ans_cmd->add_option("--matrix", ans_opts.matrix, "adjacency matrix file")->required();
  ans_cmd->add_option("--query", ans_opts.query, "queries JSONL")->required();
  ans_cmd->add_option("--params", ans_opts.params, "parameter file (default: zeros)");
  ans_cmd->add_option("--triples", ans_opts.triples,
                      "triple TSVs (for entity/relation names)");
  ans_cmd->add_option("--topk", ans_opts.topk, "answers to print per query");
  ans_cmd->add_flag("--trace", ans_opts.trace, "print per-hop witness entities");
  ans_cmd->add_option("--adapter-hops", ans_opts.adapter_hops, "all|first|none");

  EvaluateOpts eval_opts;
  auto* eval_cmd = app.add_subcommand("evaluate", "filtered-ranking evaluation");
  eval_cmd->add_option("--matrix", eval_opts.matrix, "adjacency matrix file")
      ->required();
  eval_cmd->add_option("--queries", eval_opts.queries, "queries JSONL")->required();
  eval_cmd->add_option("--report", eval_opts.report, "report path prefix")->required();
  eval_cmd->add_option("--params", eval_opts.params, "parameter file (default: zeros)");
  eval_cmd->add_flag("--flat-average", eval_opts.flat_average,
                     "average 1/rank over hard answers instead of per query");
  eval_cmd->add_option("--adapter-hops", eval_opts.adapter_hops, "all|first|none");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  kge_opts.config.threads = threads;
  adj_opts.config.threads = threads;
  ta_opts.config.threads = threads;
  ans_opts.threads = threads;
  eval_opts.threads = threads;

  try {
    if (kge_cmd->parsed()) return run_train_kge(kge_opts);
    if (adj_cmd->parsed()) return run_build_adjacency(adj_opts);
    if (gen_cmd->parsed()) return run_gen_queries(gen_opts);
    if (ta_cmd->parsed()) return run_train_adapter(ta_opts);
    if (ans_cmd->parsed()) return run_answer(ans_opts);
    if (eval_cmd->parsed()) return run_evaluate(eval_opts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
