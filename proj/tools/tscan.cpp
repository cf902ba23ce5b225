// tscan: dialog-structure discovery from unlabeled dialogs.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "tscan/tscan.hpp"

namespace {

using namespace tscan;

std::vector<std::vector<double>> default_chain(int states) {
  // i -> i+1 (0.7) or i+2 (0.3); falling off the end means "end".
  std::vector<std::vector<double>> m(static_cast<std::size_t>(states), std::vector<double>(static_cast<std::size_t>(states) + 1, 0.0));
  for (int i = 0; i < states; ++i) {
    auto& row = m[static_cast<std::size_t>(i)];
    row[static_cast<std::size_t>(std::min(i + 1, states))] += 0.7;
    row[static_cast<std::size_t>(std::min(i + 2, states))] += 0.3;
  }
  return m;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error("cannot write \"" + path + "\"");
  out << text;
}

TrainConfig train_options(CLI::App* app, TrainConfig& cfg) {
  app->add_option("--entropy-weight", cfg.entropy_weight, "Entropy term weight")->capture_default_str();
  app->add_option("--learning-rate", cfg.learning_rate, "Step size")->capture_default_str();
  app->add_option("--batch-size", cfg.batch_size, "Mini-batch size")->capture_default_str();
  app->add_option("--epochs", cfg.epochs, "Training epochs")->capture_default_str();
  app->add_option("--eps", cfg.eps, "Probability clamp floor")->capture_default_str();
  app->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tscan: SCAN clustering of dialog utterances and dialog-structure graphs"};
  app.require_subcommand(1);
  std::function<void()> action;

  // gen-synthetic
  SyntheticSpec spec;
  std::string matrix_path, gen_out, gen_truth;
  spec.num_states = 5;
  spec.num_dialogs = 200;
  spec.templates_per_state = 2;
  spec.slot_vocab_size = 50;
  auto* gen = app.add_subcommand("gen-synthetic", "Sample a synthetic corpus and its ground truth");
  gen->add_option("--states", spec.num_states)->capture_default_str();
  gen->add_option("--dialogs", spec.num_dialogs)->capture_default_str();
  gen->add_option("--templates", spec.templates_per_state)->capture_default_str();
  gen->add_option("--vocab", spec.slot_vocab_size)->capture_default_str();
  gen->add_option("--max-turns", spec.max_turns)->capture_default_str();
  gen->add_option("--seed", spec.seed)->capture_default_str();
  gen->add_option("--matrix", matrix_path, "Transition matrix file (rows: per-state probabilities, end last)");
  gen->add_option("--out", gen_out, "Corpus output (JSON lines)")->required();
  gen->add_option("--truth", gen_truth, "Ground-truth output (JSON lines)")->required();
  gen->callback([&] {
    action = [&] {
      if (!matrix_path.empty()) {
        std::ifstream in(matrix_path);
        if (!in) throw config_error("cannot open matrix \"" + matrix_path + "\"");
        spec.transition_matrix = parse_transition_matrix(in);
        spec.num_states = static_cast<int>(spec.transition_matrix.size());
      } else {
        spec.transition_matrix = default_chain(spec.num_states);
      }
      const auto [corpus, truth] = generate_synthetic(spec);
      write_corpus(corpus, gen_out);
      write_ground_truth(truth, corpus, gen_truth);
    };
  });

  // embed-hash
  std::string eh_corpus, eh_out;
  std::size_t eh_dim = 256;
  std::uint64_t eh_seed = 0;
  auto* eh = app.add_subcommand("embed-hash", "Hashed word n-gram embeddings for a corpus");
  eh->add_option("--corpus", eh_corpus)->required();
  eh->add_option("--dim", eh_dim)->capture_default_str();
  eh->add_option("--seed", eh_seed)->capture_default_str();
  eh->add_option("--out", eh_out)->required();
  eh->callback([&] {
    action = [&] { write_embeddings(hashed_ngram_embed(load_corpus(eh_corpus), eh_dim, eh_seed), eh_out); };
  });

  // embed-oracle
  std::string eo_corpus, eo_truth, eo_out;
  std::size_t eo_dim = 32;
  double eo_sep = 1.0, eo_noise = 0.5;
  std::uint64_t eo_seed = 0;
  auto* eo = app.add_subcommand("embed-oracle", "Gaussian embeddings around ground-truth state means");
  eo->add_option("--corpus", eo_corpus)->required();
  eo->add_option("--truth", eo_truth)->required();
  eo->add_option("--dim", eo_dim)->capture_default_str();
  eo->add_option("--separation", eo_sep)->capture_default_str();
  eo->add_option("--noise", eo_noise)->capture_default_str();
  eo->add_option("--seed", eo_seed)->capture_default_str();
  eo->add_option("--out", eo_out)->required();
  eo->callback([&] {
    action = [&] {
      write_embeddings(gaussian_oracle_embed(load_ground_truth(eo_truth), load_corpus(eo_corpus), eo_dim, eo_sep,
                                             eo_noise, eo_seed),
                       eo_out);
    };
  });

  // normalize
  std::string nz_in, nz_out;
  auto* nz = app.add_subcommand("normalize", "L2-normalize an embedding file");
  nz->add_option("--in", nz_in)->required();
  nz->add_option("--out", nz_out)->required();
  nz->callback([&] { action = [&] { write_embeddings(l2_normalize(read_embeddings(nz_in)), nz_out); }; });

  // mine
  std::string mn_emb, mn_out;
  std::size_t mn_k = 5;
  unsigned mn_threads = 1;
  auto* mn = app.add_subcommand("mine", "Exact cosine k-nearest neighbors");
  mn->add_option("--embeddings", mn_emb)->required();
  mn->add_option("--k", mn_k)->capture_default_str();
  mn->add_option("--threads", mn_threads)->capture_default_str();
  mn->add_option("--out", mn_out)->required();
  mn->callback([&] {
    action = [&] {
      const auto set = read_embeddings(mn_emb);
      write_neighbors(mine_neighbors(set, mn_k, mn_threads), set.ids, mn_out);
    };
  });

  // train
  std::string tr_emb, tr_nb, tr_out, tr_hist;
  std::size_t tr_clusters = 20;
  TrainConfig tr_cfg;
  auto* tr = app.add_subcommand("train", "Train the SCAN clustering head");
  tr->add_option("--embeddings", tr_emb)->required();
  tr->add_option("--neighbors", tr_nb)->required();
  tr->add_option("--clusters", tr_clusters)->capture_default_str();
  train_options(tr, tr_cfg);
  tr->add_option("--out", tr_out, "Head checkpoint")->required();
  tr->add_option("--history", tr_hist, "Per-epoch loss dump");
  tr->callback([&] {
    action = [&] {
      const auto set = read_embeddings(tr_emb);
      const auto result = train(set, read_neighbors(tr_nb, set.ids), tr_clusters, tr_cfg);
      write_head(result.head, tr_out);
      if (!tr_hist.empty()) write_history(result.history, tr_hist);
    };
  });

  // selflabel
  std::string sl_emb, sl_head, sl_corpus, sl_out, sl_labels;
  double sl_threshold = 0.99;
  std::size_t sl_iters = 5;
  TrainConfig sl_cfg;
  auto* sl = app.add_subcommand("selflabel", "Fine-tune on confident pseudo-labels and extract prototypes");
  sl->add_option("--embeddings", sl_emb)->required();
  sl->add_option("--head", sl_head)->required();
  sl->add_option("--corpus", sl_corpus)->required();
  sl->add_option("--threshold", sl_threshold)->capture_default_str();
  sl->add_option("--iterations", sl_iters)->capture_default_str();
  train_options(sl, sl_cfg);
  sl->add_option("--out", sl_out, "Fine-tuned head checkpoint")->required();
  sl->add_option("--labels", sl_labels, "Cluster labels dump")->required();
  sl->callback([&] {
    action = [&] {
      const auto set = read_embeddings(sl_emb);
      const auto head = read_head(sl_head);
      const auto tuned = quantize(fine_tune_confident(head, set, sl_threshold, sl_iters, sl_cfg).head);
      write_head(tuned, sl_out);
      write_labels(extract_prototypes(assign(tuned, set), load_corpus(sl_corpus), tuned.num_clusters()), sl_labels);
    };
  });

  // assign
  std::string as_emb, as_head, as_out;
  auto* as = app.add_subcommand("assign", "Assign every embedding to its most probable cluster");
  as->add_option("--embeddings", as_emb)->required();
  as->add_option("--head", as_head)->required();
  as->add_option("--out", as_out)->required();
  as->callback([&] {
    action = [&] { write_assignments(assign(read_head(as_head), read_embeddings(as_emb)), as_out); };
  });

  // kmeans
  std::string km_emb, km_out;
  std::size_t km_k = 20, km_iters = 300;
  double km_tol = 1e-6;
  std::uint64_t km_seed = 0;
  auto* km = app.add_subcommand("kmeans", "K-means baseline assignments");
  km->add_option("--embeddings", km_emb)->required();
  km->add_option("--k", km_k)->capture_default_str();
  km->add_option("--seed", km_seed)->capture_default_str();
  km->add_option("--max-iters", km_iters)->capture_default_str();
  km->add_option("--tol", km_tol)->capture_default_str();
  km->add_option("--out", km_out)->required();
  km->callback([&] {
    action = [&] {
      write_assignments(kmeans(read_embeddings(km_emb), km_k, km_seed, {km_iters, km_tol}).assignments, km_out);
    };
  });

  // transitions
  std::string tn_corpus, tn_assign, tn_labels, tn_out;
  auto* tn = app.add_subcommand("transitions", "Count cluster transitions into an edge list");
  tn->add_option("--corpus", tn_corpus)->required();
  tn->add_option("--assignments", tn_assign)->required();
  tn->add_option("--labels", tn_labels, "Name nodes by these labels");
  tn->add_option("--out", tn_out)->required();
  tn->callback([&] {
    action = [&] {
      const auto model = build_transitions(load_corpus(tn_corpus), read_assignments(tn_assign));
      if (tn_labels.empty()) {
        write_edge_list(model, tn_out);
      } else {
        const auto labels = read_labels(tn_labels);
        write_edge_list(model, tn_out, &labels);
      }
    };
  });

  // graph
  std::string gr_edges, gr_labels, gr_out;
  double gr_threshold = 0.6;
  auto* gr = app.add_subcommand("graph", "Prune an edge list and render the dialog-structure graph");
  gr->add_option("--edges", gr_edges)->required();
  gr->add_option("--labels", gr_labels)->required();
  gr->add_option("--threshold", gr_threshold)->capture_default_str();
  gr->add_option("--out", gr_out)->required();
  gr->callback([&] {
    action = [&] {
      const auto labels = read_labels(gr_labels);
      write_file(gr_out, to_dot(prune(read_edge_list(gr_edges, &labels), gr_threshold), labels));
    };
  });

  // metrics
  std::string mt_assign, mt_truth, mt_tsv;
  std::size_t mt_clusters = 20;
  auto* mt = app.add_subcommand("metrics", "Distribution score, intent spread and alignment accuracy");
  mt->add_option("--assignments", mt_assign)->required();
  mt->add_option("--clusters", mt_clusters)->capture_default_str();
  mt->add_option("--truth", mt_truth, "Ground truth with intents");
  mt->add_option("--tsv", mt_tsv, "Write per-intent lines here");
  mt->callback([&] {
    action = [&] {
      const auto table = read_assignments(mt_assign);
      const auto d = distribution_score(table, mt_clusters);
      std::printf("distribution: score=%.4f, ideal=%.4f, deviation=%.4f\n", d.score, d.ideal, d.deviation);
      if (mt_truth.empty()) return;
      const auto truth = load_ground_truth(mt_truth);
      std::printf("alignment: %.4f\n", alignment_accuracy(table, truth));
      const auto report = intent_confidence(table, truth.intent_of, mt_clusters);
      std::string tsv;
      for (const auto& s : report.intents) {
        std::printf("\nintent: %s\n%s\n", s.intent.c_str(), format_describe(s.nonzero).c_str());
        tsv += format_describe_tsv(s.intent, s.nonzero) + "\n";
      }
      if (!mt_tsv.empty()) write_file(mt_tsv, tsv);
    };
  });

  // pipeline
  std::string pl_config;
  std::map<std::string, std::string> pl_overrides;
  auto* pl = app.add_subcommand("pipeline", "Run every stage from a key=value config file");
  pl->add_option("--config", pl_config, "Config file")->required();
  for (const auto& key : config_keys())
    pl->add_option_function<std::string>("--" + key, [&pl_overrides, key](const std::string& v) { pl_overrides[key] = v; },
                                         "Override config key " + key);
  pl->callback([&] {
    action = [&] {
      PipelineConfig cfg = load_config(pl_config);
      for (const auto& [k, v] : pl_overrides) set_config_value(cfg, k, v);
      const auto r = run_pipeline(cfg);
      std::printf("scan distribution %.4f (ideal %.4f), kmeans %.4f; %zu graph edges; artifacts in %s\n",
                  r.scan_distribution.score, r.scan_distribution.ideal, r.kmeans_distribution.score,
                  r.graph.edges.size(), cfg.output_dir.c_str());
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code(ErrorKind::Config);
  }

  try {
    if (action) run_stage(app.get_subcommands().front()->get_name(), action);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(ErrorKind::Input);
  }
  return 0;
}
