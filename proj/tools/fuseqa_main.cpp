#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fuseqa/error.hpp"
#include "fuseqa/pipeline.hpp"
#include "fuseqa/retrieval.hpp"
#include "fuseqa/selfcheck.hpp"

using namespace fuseqa;

namespace {

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kInputError = 2;

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "JSON run configuration");
  cmd->add_option("--set", opts.overrides, "Override a config key, e.g. scoring.lambda=0.25")->take_all();
}

RunConfig resolve_config(const CommonOptions& opts) {
  RunConfig config = opts.config_path.empty() ? RunConfig{} : load_run_config(opts.config_path);
  if (const char* env = std::getenv("FUSEQA_SEED"); env != nullptr && *env != '\0') {
    std::size_t used = 0;
    unsigned long long seed = 0;
    try {
      seed = std::stoull(env, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != std::string(env).size()) throw ConfigError(std::string("FUSEQA_SEED is not an integer: ") + env);
    config.apply_seed(seed);
  }
  for (const auto& o : opts.overrides) apply_override(config, o);
  return config;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  return out;
}

void close_out(std::ofstream& out, const std::string& path) {
  out.close();
  if (!out) throw Error("failed writing " + path);
}

void write_file(const std::string& path, const std::string& content) {
  auto out = open_out(path);
  out << content;
  close_out(out, path);
}

std::string summary(const KnowledgeGraph& kg) {
  std::ostringstream s;
  s << "entities=" << kg.num_entities() << " relations=" << kg.num_relations() << " triplets=" << kg.num_triplets();
  return s.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-graph fused multiple-choice QA toolkit"};
  app.require_subcommand(1);

  CommonOptions common;

  std::string triples_path, templates_path, out_path;
  auto* build_kg = app.add_subcommand("build-kg", "Validate triples and templates into a KG bundle");
  build_kg->add_option("--triples", triples_path, "head<TAB>relation<TAB>tail file")->required();
  build_kg->add_option("--templates", templates_path, "relation<TAB>template file")->required();
  build_kg->add_option("--out", out_path, "Bundle output path")->required();

  std::string kg_path, question, choice;
  std::optional<double> lambda;
  std::optional<std::size_t> top_k, hop;
  auto* context = app.add_subcommand("context", "Print the retrieved context for one question and choice");
  context->add_option("--kg", kg_path, "KG bundle")->required();
  context->add_option("--question", question, "Question text")->required();
  context->add_option("--choice", choice, "Answer choice text")->required();
  context->add_option("--lambda", lambda, "Cosine weight in [0, 1]");
  context->add_option("--k", top_k, "Triplets to keep");
  context->add_option("--hop", hop, "Maximum hop");
  context->add_option("--out", out_path, "Also write the records to this file");
  add_common(context, common);

  std::string out_dir;
  auto* synth = app.add_subcommand("synth", "Write the synthetic planted-knowledge task");
  synth->add_option("--out-dir", out_dir, "Directory for triples.tsv, templates.tsv, train.jsonl, test.jsonl")
      ->required();
  add_common(synth, common);

  std::string data_path, loss_out;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  train_cmd->add_option("--kg", kg_path, "KG bundle")->required();
  train_cmd->add_option("--data", data_path, "Training JSONL")->required();
  train_cmd->add_option("--out", out_path, "Checkpoint output path")->required();
  train_cmd->add_option("--loss-out", loss_out, "Loss curve output path");
  add_common(train_cmd, common);

  std::string checkpoint_path;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--kg", kg_path, "KG bundle")->required();
  eval_cmd->add_option("--data", data_path, "Evaluation JSONL")->required();
  eval_cmd->add_option("--checkpoint", checkpoint_path, "Checkpoint from train")->required();
  eval_cmd->add_option("--out", out_path, "Per-example predictions JSONL");
  add_common(eval_cmd, common);

  auto* ablate = app.add_subcommand("ablate", "Fusion mode x hop grid on the synthetic task");
  ablate->add_option("--out", out_path, "Also write the table to this file");
  add_common(ablate, common);

  auto* selfcheck = app.add_subcommand("selfcheck", "Gradient and invariant checks");
  add_common(selfcheck, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInputError;
  }

  try {
    if (*build_kg) {
      KnowledgeGraph kg = load_triples(triples_path);
      TemplateTable templates = load_templates(templates_path);
      auto out = open_out(out_path);
      write_bundle(kg, templates, out);
      close_out(out, out_path);
      std::cout << summary(kg) << '\n';
      return kOk;
    }

    const RunConfig config = resolve_config(common);

    if (*context) {
      ContextConfig cc = config.context;
      if (lambda) cc.lambda = *lambda;
      if (top_k) cc.k = *top_k;
      if (hop) cc.max_hop = *hop;
      cc.validate();
      const KnowledgeBase kb = load_knowledge_base(kg_path, config);
      const auto ctx = build_context(question, choice, kb.scoring(), cc);
      std::ostringstream records;
      write_context(ctx, records);
      std::cout << records.str();
      if (!out_path.empty()) write_file(out_path, records.str());
      return kOk;
    }

    if (*synth) {
      const auto task = make_synthetic_task(config.train_examples + config.test_examples, config.kg_size, config.seed);
      std::filesystem::create_directories(out_dir);
      const std::filesystem::path dir(out_dir);
      std::ostringstream triples, templates;
      write_triples(task.kg, triples);
      write_templates(task.templates, templates);
      write_file((dir / "triples.tsv").string(), triples.str());
      write_file((dir / "templates.tsv").string(), templates.str());
      const std::span<const Example> all(task.examples);
      save_dataset(all.first(config.train_examples), (dir / "train.jsonl").string());
      save_dataset(all.subspan(config.train_examples), (dir / "test.jsonl").string());
      std::cout << summary(task.kg) << " train=" << config.train_examples << " test=" << config.test_examples << '\n';
      return kOk;
    }

    if (*train_cmd) {
      const KnowledgeBase kb = load_knowledge_base(kg_path, config);
      FusionModel model = make_model(config, kb);
      const auto examples = load_dataset(data_path);
      const auto encoded = prepare_examples(examples, kb, config, model.config());
      const Metrics m = train(model, encoded, config.train);
      save_checkpoint(model, out_path);
      if (!loss_out.empty()) {
        auto out = open_out(loss_out);
        write_loss_curve(m, out);
        close_out(out, loss_out);
      }
      char line[128];
      std::snprintf(line, sizeof line, "steps=%zu final_loss=%.6f train_accuracy=%.4f\n", m.loss_curve.size(),
                    m.loss_curve.empty() ? 0.0 : m.loss_curve.back(), m.accuracy);
      std::cout << line;
      return kOk;
    }

    if (*eval_cmd) {
      const FusionModel model = load_checkpoint(checkpoint_path);
      const KnowledgeBase kb = load_knowledge_base(kg_path, config);
      if (model.config().num_relations != std::max<std::size_t>(1, kb.kg.num_relations()))
        throw Error("checkpoint relation count does not match the knowledge graph");
      const auto examples = load_dataset(data_path);
      const auto encoded = prepare_examples(examples, kb, config, model.config());
      const Metrics m = evaluate(model, encoded);
      if (!out_path.empty()) {
        auto out = open_out(out_path);
        write_predictions(m, out);
        close_out(out, out_path);
      }
      char line[128];
      std::snprintf(line, sizeof line, "accuracy=%.4f correct=%zu total=%zu\n", m.accuracy, m.correct, m.total);
      std::cout << line;
      return kOk;
    }

    if (*ablate) {
      const auto grid = default_ablation_grid();
      const auto rows = run_ablation(grid, ablation_setup(config));
      const std::string table = format_ablation_table(rows);
      std::cout << table;
      if (!out_path.empty()) write_file(out_path, table);
      for (const auto& r : rows)
        if (!r.ok) return kCheckFailed;
      return kOk;
    }

    if (*selfcheck) {
      const auto results = run_selfcheck(config.seed);
      print_results(results, std::cout);
      for (const auto& r : results)
        if (!r.passed) return kCheckFailed;
      return kOk;
    }
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kCheckFailed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  }
  return kInputError;
}
