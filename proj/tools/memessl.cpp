// memessl command-line entry point.

#include <csignal>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "memessl/augment.hpp"
#include "memessl/checkpoint.hpp"
#include "memessl/config.hpp"
#include "memessl/corpus.hpp"
#include "memessl/features.hpp"
#include "memessl/metrics.hpp"
#include "memessl/pseudo.hpp"
#include "memessl/review.hpp"
#include "memessl/review_server.hpp"
#include "memessl/ssl_engine.hpp"
#include "memessl/synth.hpp"
#include "memessl/trainer.hpp"
#include "memessl/util.hpp"

namespace fs = std::filesystem;
using namespace memessl;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config;

  PipelineConfig load() const {
    PipelineConfig pc = config.empty() ? PipelineConfig{} : load_config(config);
    if (seed) pc.seed = *seed;
    return pc;
  }
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "Seed for all randomness of the command");
  sub->add_option("--config", c.config, "Pipeline config JSON")->check(CLI::ExistingFile);
}

void print_ledger(const RecordSet& set, std::ostream& os) {
  os << set.name() << ": " << set.size() << " records";
  for (std::size_t s = 0; s < kNumSources; ++s)
    if (set.ledger().by_source[s]) os << ", " << to_string(static_cast<Source>(s)) << "=" << set.ledger().by_source[s];
  os << "\n";
}

RecordSet ingest_or_throw(const fs::path& path, bool labels, Source src = Source::hm_train) {
  IngestOptions o;
  o.default_source = src;
  IngestResult r = ingest_metadata(path, labels, o);
  for (const auto& e : r.errors) std::cerr << path.string() << ":" << e.line << ": " << e.message << "\n";
  if (!r.errors.empty()) throw Error(path.string() + ": " + std::to_string(r.errors.size()) + " malformed line(s)");
  return r.set;
}

const ModelSpec& pick_model(const PipelineConfig& pc, const std::string& name) {
  for (const auto& m : pc.models)
    if (m.name == name) return m;
  throw Error("config has no model '" + name + "'");
}

fs::path vocab_path(const fs::path& ckpt) {
  fs::path p = ckpt;
  p += ".vocab";
  return p;
}

// Candidate files carry assigned_label where metadata carries label.
bool is_candidate_file(const fs::path& path) {
  for (const auto& line : split(binio::read_file(path), '\n')) {
    if (trim_ascii(line).empty()) continue;
    try {
      return nlohmann::json::parse(line).contains("assigned_label");
    } catch (const std::exception&) {
      return false;
    }
  }
  return false;
}

ReviewServer* g_server = nullptr;
extern "C" void on_signal(int) {
  if (g_server) g_server->request_stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised multimodal meme classification pipeline", "memessl"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  // synth
  Common c_synth;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic confounder corpus");
  add_common(synth, c_synth);
  synth->add_option("--out", synth_out, "Output directory")->required();

  // ingest
  Common c_ingest;
  std::string ingest_in, ingest_out, ingest_source = "hm_train";
  bool ingest_unlabeled = false;
  auto* ingest = app.add_subcommand("ingest", "Parse metadata JSONL and report the count ledger");
  add_common(ingest, c_ingest);
  ingest->add_option("--in", ingest_in, "Metadata JSONL")->required()->check(CLI::ExistingFile);
  ingest->add_option("--out", ingest_out, "Normalized metadata JSONL");
  ingest->add_option("--source", ingest_source, "Source for lines without one");
  ingest->add_flag("--unlabeled", ingest_unlabeled, "Labels are optional");

  // validate
  Common c_validate;
  std::string validate_in, validate_out, validate_rejected;
  auto* validate = app.add_subcommand("validate", "Drop records with empty or 'none' text");
  add_common(validate, c_validate);
  validate->add_option("--in", validate_in, "Metadata JSONL")->required()->check(CLI::ExistingFile);
  validate->add_option("--out", validate_out, "Kept records")->required();
  validate->add_option("--rejected", validate_rejected, "Rejected records");

  // extract-features
  Common c_extract;
  std::vector<std::string> extract_meta;
  std::string extract_images = ".", extract_out, extract_skipped;
  auto* extract = app.add_subcommand("extract-features", "Region features for every record's image");
  add_common(extract, c_extract);
  extract->add_option("--meta", extract_meta, "Metadata JSONL (repeatable)")->required()->check(CLI::ExistingFile);
  extract->add_option("--images", extract_images, "Directory the img paths resolve against");
  extract->add_option("--out", extract_out, "Feature store")->required();
  extract->add_option("--skipped", extract_skipped, "JSONL of skipped records");

  // train
  Common c_train;
  std::string train_train, train_val, train_features, train_out, train_curve, train_model = "model_1";
  std::optional<int> train_steps;
  std::optional<double> train_lr;
  std::string train_modality;
  auto* trainc = app.add_subcommand("train", "Train a fusion model");
  add_common(trainc, c_train);
  trainc->add_option("--train", train_train, "Training metadata JSONL")->required()->check(CLI::ExistingFile);
  trainc->add_option("--val", train_val, "Validation metadata JSONL")->check(CLI::ExistingFile);
  trainc->add_option("--features", train_features, "Feature store")->required()->check(CLI::ExistingFile);
  trainc->add_option("--out", train_out, "Checkpoint path (vocabulary written alongside)")->required();
  trainc->add_option("--curve", train_curve, "Loss curve CSV");
  trainc->add_option("--model", train_model, "Model block of the config");
  trainc->add_option("--steps", train_steps, "Override total_steps");
  trainc->add_option("--lr", train_lr, "Override base_lr");
  trainc->add_option("--modality", train_modality, "both, text_only or image_only");

  // predict
  Common c_predict;
  std::string predict_ckpt, predict_meta, predict_features, predict_out;
  bool predict_unlabeled = false;
  auto* predict = app.add_subcommand("predict", "Write P(label=1) per record");
  add_common(predict, c_predict);
  predict->add_option("--ckpt", predict_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  predict->add_option("--meta", predict_meta, "Metadata JSONL")->required()->check(CLI::ExistingFile);
  predict->add_option("--features", predict_features, "Feature store")->required()->check(CLI::ExistingFile);
  predict->add_option("--out", predict_out, "Prediction CSV")->required();
  predict->add_flag("--unlabeled", predict_unlabeled, "Records may be unlabeled");

  // pseudo-filter
  Common c_pseudo;
  std::string pseudo_pred, pseudo_pool, pseudo_out;
  std::optional<double> tau_pos, tau_neg;
  auto* pseudo = app.add_subcommand("pseudo-filter", "Select confident pool predictions");
  add_common(pseudo, c_pseudo);
  pseudo->add_option("--pred", pseudo_pred, "Prediction CSV over the pool")->required()->check(CLI::ExistingFile);
  pseudo->add_option("--pool", pseudo_pool, "Pool metadata JSONL")->check(CLI::ExistingFile);
  pseudo->add_option("--tau-pos", tau_pos, "Positive threshold (inclusive)");
  pseudo->add_option("--tau-neg", tau_neg, "Negative threshold (inclusive)");
  pseudo->add_option("--out", pseudo_out, "Candidate JSONL")->required();

  // augment
  Common c_augment;
  std::string augment_meta, augment_images = ".", augment_out;
  std::optional<double> augment_frac;
  std::optional<float> augment_fill;
  auto* augment = app.add_subcommand("augment", "Cutout every record's image");
  add_common(augment, c_augment);
  augment->add_option("--meta", augment_meta, "Metadata or candidate JSONL")->required()->check(CLI::ExistingFile);
  augment->add_option("--images", augment_images, "Directory the img paths resolve against");
  augment->add_option("--out", augment_out, "Output directory (same relative img paths)")->required();
  augment->add_option("--frac", augment_frac, "Masked fraction of the image");
  augment->add_option("--fill", augment_fill, "Fill value");

  // merge
  Common c_merge;
  std::string merge_base, merge_out, merge_name;
  std::vector<std::string> merge_add;
  bool merge_replace = false;
  auto* mergec = app.add_subcommand("merge", "Append metadata sets with an auditable ledger");
  add_common(mergec, c_merge);
  mergec->add_option("--base", merge_base, "Base metadata JSONL")->required()->check(CLI::ExistingFile);
  mergec->add_option("--add", merge_add, "Additions (repeatable, metadata or candidate JSONL)")
      ->required()
      ->check(CLI::ExistingFile);
  mergec->add_option("--out", merge_out, "Merged metadata JSONL")->required();
  mergec->add_option("--name", merge_name, "Name of the merged set");
  mergec->add_flag("--replace", merge_replace, "Replace duplicates instead of failing");

  // evaluate
  Common c_eval;
  std::string eval_pred;
  double eval_threshold = 0.5;
  auto* evalc = app.add_subcommand("evaluate", "Accuracy and AUROC of a prediction CSV");
  add_common(evalc, c_eval);
  evalc->add_option("--pred", eval_pred, "Prediction CSV")->required()->check(CLI::ExistingFile);
  evalc->add_option("--threshold", eval_threshold, "Decision threshold");

  // experiment
  Common c_exp;
  std::string exp_stages = "S0,S1,S2,S3", exp_corpus, exp_out;
  bool exp_verbose = false;
  auto* expc = app.add_subcommand("experiment", "Train and evaluate every stage for every model config");
  add_common(expc, c_exp);
  expc->add_option("--stages", exp_stages, "Comma-separated stages (S0,S1,S2,S3)");
  expc->add_option("--corpus", exp_corpus, "Corpus directory; synthesized from the config when absent")
      ->check(CLI::ExistingDirectory);
  expc->add_option("--out", exp_out, "Report directory")->required();
  expc->add_flag("--verbose", exp_verbose, "Progress on stderr");

  // serve-review
  Common c_serve;
  std::string serve_candidates, serve_log, serve_images = ".", serve_static, serve_host = "127.0.0.1";
  int serve_port = 8080;
  auto* serve = app.add_subcommand("serve-review", "HTTP review service for pseudo-label candidates");
  add_common(serve, c_serve);
  serve->add_option("--candidates", serve_candidates, "Candidate JSONL")->required()->check(CLI::ExistingFile);
  serve->add_option("--log", serve_log, "Decision log JSONL")->required();
  serve->add_option("--images", serve_images, "Directory the img paths resolve against");
  serve->add_option("--static", serve_static, "Review UI bundle directory")->check(CLI::ExistingDirectory);
  serve->add_option("--host", serve_host, "Bind address");
  serve->add_option("--port", serve_port, "Port (0 picks a free one)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*synth) {
      PipelineConfig pc = c_synth.load();
      SynthSpec spec = pc.synth;
      if (c_synth.seed) spec.seed = *c_synth.seed;
      const SynthCorpus corpus = generate_corpus(spec);
      write_corpus(corpus, synth_out);
      for (const RecordSet* s : {&corpus.train, &corpus.dev, &corpus.test, &corpus.dev_remainder, &corpus.manual, &corpus.pool})
        print_ledger(*s, std::cout);
    } else if (*ingest) {
      auto src = parse_source(ingest_source);
      if (!src) throw Error("unknown source '" + ingest_source + "'");
      IngestOptions o;
      o.default_source = *src;
      const IngestResult r = ingest_metadata(ingest_in, !ingest_unlabeled, o);
      for (const auto& e : r.errors) std::cerr << ingest_in << ":" << e.line << ": " << e.message << "\n";
      print_ledger(r.set, std::cout);
      std::cout << "lines " << r.lines_read << ", malformed " << r.errors.size() << "\n";
      if (!ingest_out.empty()) write_metadata(r.set, ingest_out);
      return r.errors.empty() ? 0 : 1;
    } else if (*validate) {
      const TextValidation v = validate_text(ingest_or_throw(validate_in, false));
      write_metadata(v.kept, validate_out);
      if (!validate_rejected.empty()) write_metadata(v.rejected, validate_rejected);
      std::cout << "kept " << v.kept.size() << ", rejected " << v.rejected.size() << "\n";
    } else if (*extract) {
      const PipelineConfig pc = c_extract.load();
      FeatureStore store(pc.features.regions(), pc.features.dim);
      std::string skipped;
      for (const auto& m : extract_meta) {
        const RecordSet set = ingest_or_throw(m, false);
        ImageStore images;
        for (const auto& r : set) {
          const fs::path p = fs::path(extract_images) / r.img;
          if (fs::exists(p)) images.put(r.id, read_image(p));
        }
        FeatureBatch fb = extract_batch(set, images, pc.features);
        for (auto& f : fb.features) store.add_or_replace(std::move(f));
        for (const auto& s : fb.skipped) {
          std::cerr << "skipped " << s.id << ": " << s.reason << "\n";
          skipped += "{\"id\":" + std::to_string(s.id) + ",\"reason\":\"" + s.reason + "\"}\n";
        }
      }
      store.write(extract_out);
      if (!extract_skipped.empty()) binio::write_file_atomic(extract_skipped, skipped);
      std::cout << "features " << store.size() << "\n";
    } else if (*trainc) {
      const PipelineConfig pc = c_train.load();
      ModelSpec spec = pick_model(pc, train_model);
      if (c_train.seed) spec.train.seed = *c_train.seed;
      if (train_steps) spec.train.total_steps = *train_steps;
      if (train_lr) spec.train.base_lr = *train_lr;
      if (!train_modality.empty()) spec.fusion.modality = parse_modality(train_modality);
      const RecordSet tr = ingest_or_throw(train_train, true);
      const RecordSet va = train_val.empty() ? RecordSet() : ingest_or_throw(train_val, true);
      const FeatureStore store = FeatureStore::read(train_features);
      const Vocabulary vocab = Vocabulary::build({&tr}, spec.fusion.vocab_size);
      TrainOptions o;
      o.checkpoint_path = fs::path(train_out);
      o.quiet = false;
      const TrainResult r = train(tr, va, store, vocab, spec.fusion, spec.train, o);
      if (!train_curve.empty()) r.report.write_csv(train_curve);
      const auto& last = r.report.points.back();
      std::cout << "final train_loss " << last.train_loss << " val_loss " << last.val_loss << " val_acc " << last.val_acc
                << "\n";
    } else if (*predict) {
      const Checkpoint ck = load_checkpoint(predict_ckpt);
      const FusionConfig& cfg = ck.config;
      const FusionParams& params = ck.params;
      const Vocabulary vocab = Vocabulary::read(vocab_path(predict_ckpt));
      const RecordSet set = ingest_or_throw(predict_meta, !predict_unlabeled);
      const FeatureStore store = FeatureStore::read(predict_features);
      const auto probs = predict_proba(set, store, vocab, params, cfg);
      std::vector<Prediction> preds;
      for (std::size_t i = 0; i < set.size(); ++i) preds.push_back({set.records()[i].id, probs[i], set.records()[i].label});
      write_predictions(preds, predict_out);
      std::cout << "predictions " << preds.size() << "\n";
    } else if (*pseudo) {
      const PipelineConfig pc = c_pseudo.load();
      Thresholds th = pc.thresholds;
      if (tau_pos) th.tau_pos = *tau_pos;
      if (tau_neg) th.tau_neg = *tau_neg;
      std::vector<std::pair<std::int64_t, double>> probas;
      for (const auto& p : read_predictions(pseudo_pred)) probas.emplace_back(p.id, p.proba);
      std::optional<RecordSet> pool;
      if (!pseudo_pool.empty()) pool = ingest_or_throw(pseudo_pool, false, Source::memotion_pool);
      const auto cands = filter_pseudo(probas, th, pool ? &*pool : nullptr);
      write_candidates(cands, pseudo_out);
      std::size_t pos = 0;
      for (const auto& cnd : cands) pos += cnd.assigned_label == 1;
      std::cout << "candidates " << cands.size() << " (label 1: " << pos << ", label 0: " << cands.size() - pos << ")\n";
    } else if (*augment) {
      const PipelineConfig pc = c_augment.load();
      const double frac = augment_frac ? *augment_frac : pc.cutout_frac;
      const float fill = augment_fill ? *augment_fill : pc.cutout_fill;
      const std::uint64_t seed = pc.seed;
      const RecordSet set = ingest_or_throw(augment_meta, false);
      ImageStore images;
      for (const auto& r : set) images.put(r.id, read_image(fs::path(augment_images) / r.img));
      const ImageStore out = augment_set(set, images, frac, fill, seed);
      for (const auto& r : set) write_image(out.get(r.id), fs::path(augment_out) / r.img);
      std::cout << "augmented " << set.size() << "\n";
    } else if (*mergec) {
      RecordSet merged = ingest_or_throw(merge_base, true);
      for (const auto& a : merge_add) {
        RecordSet add;
        if (is_candidate_file(a)) {
          add = candidates_to_records(read_candidates(a), fs::path(a).stem().string());
        } else {
          add = ingest_or_throw(a, true, Source::pseudo);
        }
        merged = merge(merged, add, merge_replace ? MergePolicy::replace_on_dup : MergePolicy::error_on_dup,
                       merge_name.empty() ? fs::path(merge_out).stem().string() : merge_name);
      }
      write_metadata(merged, merge_out);
      print_ledger(merged, std::cout);
      for (const auto& [name, n] : merged.ledger().components) std::cout << "  + " << name << " " << n << "\n";
      if (merged.ledger().replaced) std::cout << "  replaced " << merged.ledger().replaced << "\n";
    } else if (*evalc) {
      const EvalResult r = evaluate(read_predictions(eval_pred), eval_threshold);
      std::printf("n %zu\naccuracy %.6f\nauroc %.6f\n", r.n, r.accuracy, r.auroc);
    } else if (*expc) {
      const PipelineConfig pc = c_exp.load();
      ExperimentConfig ec = experiment_config(pc);
      ec.stages = parse_stages(exp_stages);
      ec.output_dir = fs::path(exp_out);
      ec.quiet = !exp_verbose;
      ExperimentInputs inputs;
      if (exp_corpus.empty()) {
        SynthSpec spec = pc.synth;
        spec.seed = pc.seed;
        inputs = inputs_from_synth(generate_corpus(spec));
      } else {
        inputs = load_inputs(exp_corpus);
      }
      const StageReport report = run_experiment(inputs, ec);
      std::cout << report.to_table();
      for (const auto& p : report.pseudo)
        std::cout << p.model << ": pool " << p.pool_total << ", text kept " << p.pool_text_kept << ", featured "
                  << p.pool_featured << ", candidates " << p.candidates << " (" << p.positives << "/" << p.negatives
                  << "), reviewed " << p.reviewed << ", accepted " << p.accepted << "\n";
    } else if (*serve) {
      ReviewSession session(read_candidates(serve_candidates), fs::path(serve_log));
      ReviewServerOptions o;
      o.host = serve_host;
      o.port = serve_port;
      o.image_root = serve_images;
      if (!serve_static.empty()) o.static_dir = fs::path(serve_static);
      ReviewServer server(session, o);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      const int port = server.start();
      const ReviewStats s = session.stats();
      std::cout << "listening on http://" << serve_host << ":" << port << " (" << s.total << " candidates, " << s.pending
                << " pending, replayed " << session.replayed() << " decisions)" << std::endl;
      server.wait();
      g_server = nullptr;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
