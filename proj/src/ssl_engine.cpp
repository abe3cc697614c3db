#include "memessl/ssl_engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <set>

#include "memessl/augment.hpp"
#include "memessl/checkpoint.hpp"
#include "memessl/synth.hpp"
#include "memessl/tokenizer.hpp"
#include "memessl/util.hpp"

namespace memessl {

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::S0_baseline: return "S0_baseline";
    case Stage::S1_manual: return "S1_manual";
    case Stage::S2_pseudo: return "S2_pseudo";
    case Stage::S3_filtered: return "S3_filtered";
  }
  return "?";
}

Stage parse_stage(std::string_view s) {
  const std::string t = trim_ascii(s);
  for (std::size_t i = 0; i < kNumStages; ++i) {
    const auto st = static_cast<Stage>(i);
    const std::string full(to_string(st));
    if (t == full || t == full.substr(0, 2)) return st;
  }
  throw Error("unknown stage '" + t + "'");
}

std::vector<Stage> parse_stages(std::string_view csv) {
  std::set<Stage> seen;
  for (const auto& part : split(csv, ','))
    if (!trim_ascii(part).empty()) seen.insert(parse_stage(part));
  if (seen.empty()) throw Error("no stages given");
  return {seen.begin(), seen.end()};
}

namespace {

void require_labeled(const RecordSet& set, const char* what) {
  for (const auto& r : set)
    if (!r.label) throw Error(std::string(what) + ": record " + std::to_string(r.id) + " is unlabeled");
}

void require_pseudo(const RecordSet& set, const char* what) {
  require_labeled(set, what);
  for (const auto& r : set)
    if (r.source != Source::pseudo)
      throw Error(std::string(what) + ": record " + std::to_string(r.id) + " does not carry source=pseudo");
}

}  // namespace

RecordSet build_stage_metadata(Stage stage, const RecordSet& hm_train, const RecordSet& dev_remainder,
                               const RecordSet& manual, const RecordSet* pseudo_set, const RecordSet* filtered_set) {
  require_labeled(hm_train, "hm_train");
  const std::string name(to_string(stage));
  if (stage == Stage::S0_baseline) return merge(RecordSet(), hm_train, MergePolicy::error_on_dup, name);
  const RecordSet s1 = compose_training_metadata(hm_train, dev_remainder, manual);
  if (stage == Stage::S1_manual) return merge(RecordSet(), s1, MergePolicy::error_on_dup, name);
  const RecordSet* extra = stage == Stage::S2_pseudo ? pseudo_set : filtered_set;
  const char* what = stage == Stage::S2_pseudo ? "pseudo_set" : "filtered_set";
  if (!extra) throw Error(name + ": " + what + " is required");
  require_pseudo(*extra, what);
  return merge(s1, *extra, MergePolicy::error_on_dup, name);
}

ExperimentInputs inputs_from_synth(const SynthCorpus& corpus) {
  ExperimentInputs in;
  in.hm_train = corpus.train;
  in.dev_remainder = corpus.dev_remainder;
  in.manual = corpus.manual;
  in.pool = corpus.pool;
  in.val = corpus.dev;
  in.test = corpus.test;
  in.images = corpus.images;
  auto truth = corpus.truth;
  in.reviewer = [truth](const PseudoCandidate& c) -> std::optional<Verdict> {
    auto it = truth.find(c.id);
    if (it == truth.end()) return std::nullopt;
    return it->second.label == c.assigned_label ? Verdict::accepted : Verdict::rejected;
  };
  return in;
}

ExperimentInputs load_inputs(const std::filesystem::path& dir) {
  auto load = [&](const char* file, bool labels, Source src) {
    IngestOptions opts;
    opts.default_source = src;
    const IngestResult r = ingest_metadata(dir / file, labels, opts);
    if (!r.errors.empty())
      throw Error((dir / file).string() + ":" + std::to_string(r.errors.front().line) + ": " + r.errors.front().message);
    return r.set;
  };
  ExperimentInputs in;
  in.hm_train = load("train.jsonl", true, Source::hm_train);
  in.val = load("dev.jsonl", true, Source::hm_dev_unseen);
  in.test = load("test.jsonl", true, Source::hm_test_unseen);
  in.dev_remainder = load("dev_remainder.jsonl", true, Source::hm_dev_seen);
  in.manual = load("manual.jsonl", true, Source::memotion_manual);
  in.pool = load("pool.jsonl", false, Source::memotion_pool);
  if (std::filesystem::exists(dir / "filtered.jsonl")) in.filtered = load("filtered.jsonl", true, Source::pseudo);
  for (const RecordSet* s : {&in.hm_train, &in.val, &in.test, &in.dev_remainder, &in.manual, &in.pool})
    for (const auto& r : *s)
      if (std::filesystem::exists(dir / r.img)) in.images.put(r.id, read_image(dir / r.img));
  if (!in.filtered && std::filesystem::exists(dir / "truth.jsonl")) {
    auto truth = read_truth(dir / "truth.jsonl");
    in.reviewer = [truth = std::move(truth)](const PseudoCandidate& c) -> std::optional<Verdict> {
      auto it = truth.find(c.id);
      if (it == truth.end()) return std::nullopt;
      return it->second.label == c.assigned_label ? Verdict::accepted : Verdict::rejected;
    };
  }
  return in;
}

// --- report --------------------------------------------------------------

const StageRow* StageReport::find(Stage stage, const std::string& model) const {
  for (const auto& r : rows)
    if (r.stage == stage && r.model == model) return &r;
  return nullptr;
}

namespace {

std::string num(double v, const char* fmt = "%.6f") {
  if (std::isnan(v)) return "nan";
  char buf[48];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

std::string pct(double v) { return std::isnan(v) ? "nan" : num(100.0 * v, "%.2f"); }

}  // namespace

std::string StageReport::to_csv() const {
  std::string out = "stage,model,n_train";
  for (std::size_t s = 0; s < kNumSources; ++s) out += ",n_" + std::string(to_string(static_cast<Source>(s)));
  out += ",val_acc,val_auroc,test_acc,test_auroc\n";
  for (const auto& r : rows) {
    out += std::string(to_string(r.stage)) + "," + r.model + "," + std::to_string(r.ledger.total);
    for (std::size_t s = 0; s < kNumSources; ++s) out += "," + std::to_string(r.ledger.by_source[s]);
    out += "," + num(r.val.accuracy) + "," + num(r.val.auroc) + "," + num(r.test.accuracy) + "," + num(r.test.auroc) + "\n";
  }
  return out;
}

std::string StageReport::to_table() const {
  const std::vector<std::string> head{"Dataset", "Model", "Val Acc", "Val AUROC", "Test Acc", "Test AUROC"};
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rows)
    cells.push_back({std::string(to_string(r.stage)) + " (" + std::to_string(r.ledger.total) + ")", r.model,
                     pct(r.val.accuracy), pct(r.val.auroc), pct(r.test.accuracy), pct(r.test.auroc)});
  std::vector<std::size_t> width(head.size());
  for (std::size_t c = 0; c < head.size(); ++c) {
    width[c] = head[c].size();
    for (const auto& row : cells) width[c] = std::max(width[c], row[c].size());
  }
  auto line = [&](const std::vector<std::string>& row) {
    std::string out;
    for (std::size_t c = 0; c < row.size(); ++c) {
      const std::size_t pad = width[c] - row[c].size();
      if (c < 2) {
        out += row[c] + std::string(pad, ' ');
      } else {
        out += std::string(pad, ' ') + row[c];
      }
      out += c + 1 < row.size() ? "  " : "";
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out + "\n";
  };
  std::string out = line(head);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
  for (const auto& row : cells) out += line(row);
  return out;
}

void StageReport::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir / "curves");
  binio::write_file_atomic(dir / "report.csv", to_csv());
  binio::write_file_atomic(dir / "report.txt", to_table());
  for (const auto& r : rows) r.curve.write_csv(dir / "curves" / (std::string(to_string(r.stage)) + "_" + r.model + ".csv"));
  for (const auto& p : pseudo) write_candidates(p.selected, dir / ("candidates_" + p.model + ".jsonl"));
}

// --- experiment ----------------------------------------------------------

namespace {

struct Featured {
  RecordSet set;
  std::size_t dropped = 0;
};

// Keeps the records with extracted features.
Featured keep_featured(const RecordSet& set, const FeatureStore& store) {
  std::vector<MemeRecord> kept;
  for (const auto& r : set)
    if (store.contains(r.id)) kept.push_back(r);
  Featured f;
  f.dropped = set.size() - kept.size();
  f.set = kept.size() == set.size() ? set : RecordSet(set.name(), std::move(kept));
  return f;
}

void check_disjoint(const RecordSet& train, const RecordSet& eval, const std::string& what) {
  for (const auto& r : train)
    if (eval.contains(r.id))
      throw Error(what + ": training record " + std::to_string(r.id) + " also appears in " + eval.name());
}

EvalResult eval_split(const RecordSet& set, const FeatureStore& features, const Vocabulary& vocab,
                      const FusionParams& params, const FusionConfig& cfg) {
  if (set.empty()) {
    EvalResult e;
    e.accuracy = e.auroc = std::numeric_limits<double>::quiet_NaN();
    return e;
  }
  const auto probs = predict_proba(set, features, vocab, params, cfg);
  std::vector<int> labels;
  labels.reserve(set.size());
  for (const auto& r : set) labels.push_back(*r.label);
  EvalResult e;
  e.n = set.size();
  e.accuracy = accuracy(probs, labels);
  try {
    e.auroc = auroc(probs, labels);
  } catch (const Error&) {
    e.auroc = std::numeric_limits<double>::quiet_NaN();
  }
  return e;
}

}  // namespace

StageReport run_experiment(const ExperimentInputs& in, const ExperimentConfig& cfg) {
  if (cfg.models.empty()) throw Error("experiment: no model configs");
  if (cfg.stages.empty()) throw Error("experiment: no stages");
  cfg.features.validate();
  cfg.thresholds.validate();
  if (!(cfg.cutout_frac >= 0.0 && cfg.cutout_frac <= 1.0)) throw Error("experiment: cutout_frac must lie in [0,1]");
  std::set<std::string> names;
  for (const auto& m : cfg.models) {
    if (m.name.empty() || !names.insert(m.name).second) throw Error("experiment: model names must be unique and non-empty");
    m.fusion.validate();
    (void)m.train.validate();
    if (m.fusion.regions != cfg.features.regions() || m.fusion.region_dim != cfg.features.dim)
      throw Error("experiment: model '" + m.name + "' region shape does not match the feature config");
  }
  std::vector<Stage> stages = cfg.stages;
  std::sort(stages.begin(), stages.end());
  stages.erase(std::unique(stages.begin(), stages.end()), stages.end());
  auto wants = [&](Stage s) { return std::find(stages.begin(), stages.end(), s) != stages.end(); };
  const bool need_pseudo = wants(Stage::S2_pseudo) || wants(Stage::S3_filtered);
  if (need_pseudo && !wants(Stage::S1_manual))
    throw Error("experiment: S2/S3 need the S1 model to pseudo-label the pool; add S1 to the stages");
  if (wants(Stage::S3_filtered) && !in.filtered && !in.reviewer)
    throw Error("experiment: S3 needs a filtered set or a reviewer");

  StageReport report;

  // Region features for every record with a usable image.
  FeatureStore base(cfg.features.regions(), cfg.features.dim);
  for (const RecordSet* s : {&in.hm_train, &in.dev_remainder, &in.manual, &in.pool, &in.val, &in.test}) {
    FeatureBatch fb = extract_batch(*s, in.images, cfg.features);
    for (auto& f : fb.features)
      if (!base.contains(f.id)) base.add(std::move(f));
    report.skipped.insert(report.skipped.end(), fb.skipped.begin(), fb.skipped.end());
  }
  const RecordSet hm_train = keep_featured(in.hm_train, base).set;
  const RecordSet dev_remainder = keep_featured(in.dev_remainder, base).set;
  const RecordSet manual = keep_featured(in.manual, base).set;
  const RecordSet val = keep_featured(in.val, base).set;
  const RecordSet test = keep_featured(in.test, base).set;

  // Vocabulary over the reliably labeled text, one per model capacity.
  const RecordSet s1_meta = build_stage_metadata(Stage::S1_manual, hm_train, dev_remainder, manual);
  const RecordSet s0_meta = build_stage_metadata(Stage::S0_baseline, hm_train, dev_remainder, manual);

  struct PerModel {
    Vocabulary vocab;
    std::optional<FusionParams> s1_params;
    FeatureStore features;
    RecordSet pseudo_set, filtered_set;
    bool have_pseudo = false;
  };
  std::vector<PerModel> per(cfg.models.size());
  for (std::size_t m = 0; m < cfg.models.size(); ++m) {
    per[m].vocab = Vocabulary::build({&s1_meta}, cfg.models[m].fusion.vocab_size);
    per[m].features = base;
  }

  auto train_stage = [&](Stage stage, std::size_t m, const RecordSet& meta) {
    const ModelSpec& spec = cfg.models[m];
    check_disjoint(meta, val, std::string(to_string(stage)));
    check_disjoint(meta, test, std::string(to_string(stage)));
    TrainConfig tc = spec.train;
    tc.seed = derive_seed(cfg.seed, 0x57a6e000ULL + 16 * static_cast<std::uint64_t>(stage) + m);
    TrainOptions opts;
    opts.quiet = cfg.quiet;
    if (cfg.output_dir) {
      std::filesystem::create_directories(*cfg.output_dir / "checkpoints");
      opts.checkpoint_path = *cfg.output_dir / "checkpoints" / (std::string(to_string(stage)) + "_" + spec.name + ".ckpt");
    }
    if (!cfg.quiet) std::cerr << "[" << to_string(stage) << "/" << spec.name << "] training on " << meta.size() << " records\n";
    TrainResult tr = train(meta, val, per[m].features, per[m].vocab, spec.fusion, tc, opts);
    StageRow row;
    row.stage = stage;
    row.model = spec.name;
    row.ledger = meta.ledger();
    row.val = eval_split(val, per[m].features, per[m].vocab, tr.params, tr.config);
    row.test = eval_split(test, per[m].features, per[m].vocab, tr.params, tr.config);
    row.curve = std::move(tr.report);
    report.rows.push_back(std::move(row));
    return std::move(tr.params);
  };

  for (Stage stage : stages) {
    for (std::size_t m = 0; m < cfg.models.size(); ++m) {
      PerModel& pm = per[m];
      const ModelSpec& spec = cfg.models[m];
      switch (stage) {
        case Stage::S0_baseline:
          (void)train_stage(stage, m, s0_meta);
          break;
        case Stage::S1_manual:
          pm.s1_params = train_stage(stage, m, s1_meta);
          break;
        case Stage::S2_pseudo:
        case Stage::S3_filtered: {
          if (!pm.s1_params) throw Error("experiment: missing S1 model for " + spec.name);
          if (!pm.have_pseudo) {
            // Confidence on un-augmented pool inputs, from the S1 model.
            PseudoSummary sum;
            sum.model = spec.name;
            sum.pool_total = in.pool.size();
            const RecordSet pool_text = validate_text(in.pool).kept;
            sum.pool_text_kept = pool_text.size();
            const RecordSet pool = keep_featured(pool_text, base).set;
            sum.pool_featured = pool.size();
            FusionConfig fc = spec.fusion;
            fc.dropout_rate = spec.train.dropout_rate;
            std::vector<std::pair<std::int64_t, double>> probas;
            if (!pool.empty()) {
              const auto p = predict_proba(pool, base, pm.vocab, *pm.s1_params, fc);
              for (std::size_t i = 0; i < pool.size(); ++i) probas.emplace_back(pool.records()[i].id, p[i]);
            }
            std::vector<PseudoCandidate> cands = filter_pseudo(probas, cfg.thresholds, &pool, "S2_pseudo");
            sum.candidates = cands.size();
            for (const auto& c : cands) (c.assigned_label == 1 ? sum.positives : sum.negatives)++;
            pm.pseudo_set = candidates_to_records(cands, "pseudo");

            // Strong augmentation of the selected records, then fresh features.
            const std::uint64_t aug_seed = derive_seed(cfg.seed, 0xc07007ULL + m);
            const ImageStore augmented = augment_set(pm.pseudo_set, in.images, cfg.cutout_frac, cfg.cutout_fill, aug_seed);
            FeatureBatch fb = extract_batch(pm.pseudo_set, augmented, cfg.features);
            if (!fb.skipped.empty())
              throw Error("experiment: augmented record " + std::to_string(fb.skipped.front().id) + " lost its features: " +
                          fb.skipped.front().reason);
            for (auto& f : fb.features) pm.features.add_or_replace(std::move(f));

            if (in.filtered) {
              pm.filtered_set = keep_featured(*in.filtered, base).set;
            } else if (in.reviewer) {
              ReviewSession session(cands);
              for (const auto& c : cands) {
                if (c.assigned_label != 1) continue;
                if (auto v = in.reviewer(c)) {
                  session.post_decision(c.id, *v, "oracle", std::nullopt, 0);
                  ++sum.reviewed;
                }
              }
              pm.filtered_set = session.export_accepted();
              sum.accepted = pm.filtered_set.size();
            }
            sum.selected = std::move(cands);
            report.pseudo.push_back(std::move(sum));
            pm.have_pseudo = true;
          }
          if (stage == Stage::S2_pseudo) {
            const RecordSet meta = build_stage_metadata(stage, hm_train, dev_remainder, manual, &pm.pseudo_set);
            (void)train_stage(stage, m, meta);
          } else {
            const RecordSet meta = build_stage_metadata(stage, hm_train, dev_remainder, manual, nullptr, &pm.filtered_set);
            (void)train_stage(stage, m, meta);
          }
          break;
        }
      }
    }
  }
  if (cfg.output_dir) report.write(*cfg.output_dir);
  return report;
}

}  // namespace memessl
