#include <CLI11.hpp>

#include <map>
#include <set>

#include "capeval/bench.hpp"
#include "capeval/elo.hpp"
#include "capeval/error.hpp"
#include "capeval/textmetrics.hpp"
#include "capeval/vdcscore.hpp"
#include "context.hpp"

namespace capeval::cli {

namespace {

struct Prediction {
  std::string video_id;
  std::string caption;
  vdc::Category category = vdc::Category::kDetailed;
};

std::string field(const nlohmann::json& row, const char* key,
                  const fs::path& path, std::size_t index) {
  const auto it = row.find(key);
  if (it == row.end() || !it->is_string()) {
    throw Error(Errc::kValidation, path.string() + ": row " +
                                       std::to_string(index + 1) +
                                       ": field '" + key +
                                       "' must be a string");
  }
  return it->get<std::string>();
}

std::vector<Prediction> read_predictions(const fs::path& path) {
  std::vector<Prediction> out;
  std::set<std::pair<std::string, vdc::Category>> seen;
  const auto rows = read_jsonl(path);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Prediction p;
    p.video_id = field(rows[i], "video_id", path, i);
    p.caption = field(rows[i], "caption", path, i);
    if (rows[i].contains("category")) {
      p.category = vdc::parse_category(field(rows[i], "category", path, i));
    }
    if (!seen.insert({p.video_id, p.category}).second) {
      throw Error(Errc::kValidation, path.string() + ": row " +
                                         std::to_string(i + 1) +
                                         ": duplicate prediction for '" +
                                         p.video_id + "'");
    }
    out.push_back(std::move(p));
  }
  if (out.empty()) throw Error(Errc::kNoData, path.string() + " is empty");
  return out;
}

/// Rows may carry "references" (array), "caption" (string) or a bench-style
/// "captions" object, from which `category` is taken.
std::map<std::string, std::vector<std::string>> read_references(
    const fs::path& path, vdc::Category category) {
  std::map<std::string, std::vector<std::string>> out;
  const auto rows = read_jsonl(path);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    const std::string id = field(row, "video_id", path, i);
    std::vector<std::string> refs;
    if (const auto r = row.find("references"); r != row.end()) {
      refs = r->get<std::vector<std::string>>();
    } else if (const auto c = row.find("caption"); c != row.end()) {
      refs.push_back(c->get<std::string>());
    } else if (const auto cs = row.find("captions"); cs != row.end()) {
      refs.push_back(
          cs->at(std::string(vdc::category_name(category))).get<std::string>());
    }
    if (refs.empty()) {
      throw Error(Errc::kValidation, path.string() + ": row " +
                                         std::to_string(i + 1) +
                                         ": no reference caption");
    }
    if (!out.emplace(id, std::move(refs)).second) {
      throw Error(Errc::kValidation, path.string() + ": row " +
                                         std::to_string(i + 1) +
                                         ": duplicate video_id '" + id + "'");
    }
  }
  return out;
}

std::string join(const std::vector<std::string>& xs) {
  std::string s;
  for (const auto& x : xs) s += (s.empty() ? "" : ", ") + x;
  return s;
}

void check_alignment(const std::vector<Prediction>& preds,
                     const std::map<std::string, std::vector<std::string>>& refs) {
  std::vector<std::string> no_ref;
  std::set<std::string> pred_ids;
  for (const auto& p : preds) {
    pred_ids.insert(p.video_id);
    if (!refs.contains(p.video_id)) no_ref.push_back(p.video_id);
  }
  std::vector<std::string> no_pred;
  for (const auto& [id, _] : refs) {
    if (!pred_ids.contains(id)) no_pred.push_back(id);
  }
  if (no_ref.empty() && no_pred.empty()) return;
  std::string msg = "unmatched video ids:";
  if (!no_ref.empty()) msg += " without reference [" + join(no_ref) + "]";
  if (!no_pred.empty()) msg += " without prediction [" + join(no_pred) + "]";
  throw Error(Errc::kNotFound, msg);
}

// eval-rules ---------------------------------------------------------------

struct RulesOptions {
  std::string preds;
  std::string refs;
  std::vector<std::string> metrics;
  std::string category = "detailed";
  std::size_t workers = 1;
};

int eval_rules(const RulesOptions& o, RunContext& ctx) {
  std::vector<metrics::Metric> selected;
  if (o.metrics.empty()) {
    selected = metrics::all_metrics();
  } else {
    for (const auto& m : o.metrics) selected.push_back(metrics::parse_metric(m));
  }
  const auto preds = read_predictions(ctx.input(o.preds));
  const auto refs =
      read_references(ctx.input(o.refs), vdc::parse_category(o.category));
  check_alignment(preds, refs);

  std::vector<metrics::CaptionPair> pairs;
  for (const auto& p : preds) {
    pairs.push_back({p.video_id, p.caption, refs.at(p.video_id)});
  }
  const auto report = metrics::score_corpus(pairs, selected, o.workers);
  for (const auto& item : report.items) {
    for (const auto& w : item.warnings) {
      *ctx.err << "warning: " << item.id << ": " << w << "\n";
    }
  }
  ctx.write_json("metrics.json", report.to_json());
  return 0;
}

// vdcscore -----------------------------------------------------------------

struct VdcOptions {
  std::string preds;
  std::string qa;
  std::string bench;
  bool gen_qa = false;
  bool no_triplets = false;
  LlmOptions llm;
};

using QaKey = std::pair<std::string, vdc::Category>;

int vdcscore(const VdcOptions& o, RunContext& ctx) {
  if (o.qa.empty() && !o.gen_qa) {
    throw Error(Errc::kConfiguration, "vdcscore needs --qa or --gen-qa");
  }
  if (o.gen_qa && o.bench.empty()) {
    throw Error(Errc::kConfiguration, "--gen-qa needs --bench");
  }
  const auto preds = read_predictions(ctx.input(o.preds));
  LlmSetup llm = make_llm(o.llm, ctx);

  std::map<QaKey, std::vector<vdc::QAPair>> qa;
  if (!o.qa.empty()) {
    for (auto& r : vdc::load_qa_file(ctx.input(o.qa))) {
      qa[{r.video_id, r.category}] = std::move(r.pairs);
    }
  }
  if (o.gen_qa) {
    const auto entries = bench::load(ctx.input(o.bench));
    std::map<std::string, const bench::BenchmarkEntry*> by_id;
    for (const auto& e : entries) by_id[e.video_id] = &e;
    std::vector<nlohmann::json> rows;
    std::set<QaKey> done;
    for (const auto& p : preds) {
      const QaKey key{p.video_id, p.category};
      if (qa.contains(key) || !done.insert(key).second) continue;
      const auto it = by_id.find(p.video_id);
      if (it == by_id.end()) continue;  // reported below
      auto ex = vdc::extract_qa(it->second->captions.get(p.category),
                                p.category, *llm.client, llm.templates);
      for (const auto& w : ex.warnings) {
        *ctx.err << "warning: " << p.video_id << "/"
                 << vdc::category_name(p.category) << ": " << w << "\n";
      }
      vdc::QARecord rec{p.video_id, p.category, ex.pairs};
      rows.push_back(rec.to_json());
      qa[key] = std::move(ex.pairs);
    }
    ctx.write_jsonl("qa.jsonl", rows);
  }

  std::vector<std::string> missing;
  for (const auto& p : preds) {
    if (!qa.contains({p.video_id, p.category})) {
      missing.push_back(p.video_id + "/" +
                        std::string(vdc::category_name(p.category)));
    }
  }
  if (!missing.empty()) {
    throw Error(Errc::kNotFound,
                "no question set for predictions [" + join(missing) + "]");
  }

  std::vector<vdc::TripletResult> all;
  nlohmann::json per_video = nlohmann::json::object();
  std::vector<std::string> warnings;
  for (const auto& p : preds) {
    vdc::VDCResult r;
    try {
      r = vdc::evaluate(p.caption, qa.at({p.video_id, p.category}),
                        *llm.client, llm.templates);
    } catch (const vdc::EvaluationError& e) {
      per_video[p.video_id][std::string(vdc::category_name(p.category))] =
          e.partial().to_json(!o.no_triplets);
      auto overall =
          vdc::VDCResult::aggregate(all, llm.templates.version).to_json(false);
      overall["per_video"] = per_video;
      overall["failed_video"] = p.video_id;
      overall["error"] = e.what();
      ctx.write_json("vdcscore.partial.json", overall);
      *ctx.err << "partial results: "
               << (ctx.out_dir / "vdcscore.partial.json").generic_string()
               << "\n";
      llm.record(ctx);
      throw;
    }
    for (const auto& w : r.warnings) warnings.push_back(p.video_id + ": " + w);
    per_video[p.video_id][std::string(vdc::category_name(p.category))] =
        r.to_json(!o.no_triplets);
    all.insert(all.end(), r.per_triplet.begin(), r.per_triplet.end());
  }
  auto overall = vdc::VDCResult::aggregate(std::move(all), llm.templates.version);
  overall.warnings = warnings;
  auto j = overall.to_json(false);
  j["per_video"] = std::move(per_video);
  ctx.write_json("vdcscore.json", j);
  llm.record(ctx);
  return 0;
}

// vdd ----------------------------------------------------------------------

struct VddOptions {
  std::string preds;
  std::string refs;
  std::string category = "detailed";
  LlmOptions llm;
};

int vdd(const VddOptions& o, RunContext& ctx) {
  const auto preds = read_predictions(ctx.input(o.preds));
  const auto refs =
      read_references(ctx.input(o.refs), vdc::parse_category(o.category));
  check_alignment(preds, refs);
  LlmSetup llm = make_llm(o.llm, ctx);
  std::vector<vdc::VddItem> items;
  for (const auto& p : preds) {
    items.push_back({p.video_id, p.caption, refs.at(p.video_id).front()});
  }
  const auto result = vdc::vdd_batch(items, *llm.client, llm.templates);
  ctx.write_json("vdd.json", result.to_json());
  llm.record(ctx);
  return 0;
}

// correlate ----------------------------------------------------------------

struct CorrelateOptions {
  std::string scores;
  std::vector<std::string> metrics;
};

int correlate(const CorrelateOptions& o, RunContext& ctx) {
  const auto rows = read_jsonl(ctx.input(o.scores));
  if (rows.size() < 2) {
    throw Error(Errc::kNoData, "correlation needs at least two rows");
  }
  std::vector<std::string> names = o.metrics;
  if (names.empty()) {
    for (const auto& [k, v] : rows.front().items()) {
      if (!v.is_number()) continue;
      bool everywhere = true;
      for (const auto& r : rows) {
        everywhere = everywhere && r.contains(k) && r.at(k).is_number();
      }
      if (everywhere) names.push_back(k);
    }
  }
  if (names.size() < 2) {
    throw Error(Errc::kNoData, "need at least two numeric score columns");
  }
  std::map<std::string, std::vector<double>> cols;
  for (const auto& name : names) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto it = rows[i].find(name);
      if (it == rows[i].end() || !it->is_number()) {
        throw Error(Errc::kValidation, "row " + std::to_string(i + 1) +
                                           " lacks numeric '" + name + "'");
      }
      cols[name].push_back(it->get<double>());
    }
  }
  nlohmann::json matrix = nlohmann::json::object();
  for (const auto& a : names) {
    for (const auto& b : names) {
      matrix[a][b] = a == b ? 1.0 : elo::correlate(cols[a], cols[b]);
    }
  }
  ctx.write_json("correlation.json", {{"method", "pearson"},
                                      {"n", rows.size()},
                                      {"metrics", names},
                                      {"matrix", std::move(matrix)}});
  return 0;
}

}  // namespace

void register_eval(CLI::App& root, RunContext& ctx,
                   std::vector<Command>& cmds) {
  {
    auto o = std::make_shared<RulesOptions>();
    auto* app = root.add_subcommand(
        "eval-rules", "Score predictions with BLEU, CIDEr, METEOR and ROUGE-L");
    add_common(app, ctx);
    app->add_option("--preds", o->preds, "Predictions JSONL {video_id, caption}")
        ->required()
        ->check(CLI::ExistingFile);
    app->add_option("--refs", o->refs,
                    "References JSONL {video_id, references|caption|captions}")
        ->required()
        ->check(CLI::ExistingFile);
    app->add_option("--metrics", o->metrics,
                    "Comma list of bleu1, bleu4, cider, meteor, rouge_l")
        ->delimiter(',');
    app->add_option("--category", o->category,
                    "Caption category taken from bench-style references")
        ->capture_default_str();
    app->add_option("--workers", o->workers, "Scoring threads")
        ->capture_default_str()
        ->check(CLI::Range(1, 256));
    cmds.push_back({"eval-rules", app,
                    [o](RunContext& c) { return eval_rules(*o, c); }});
  }
  {
    auto o = std::make_shared<VdcOptions>();
    auto* app = root.add_subcommand(
        "vdcscore", "Question-answer decomposed caption scoring with an LLM judge");
    add_common(app, ctx);
    add_llm_options(app, o->llm);
    app->add_option("--preds", o->preds,
                    "Predictions JSONL {video_id, caption, category?}")
        ->required()
        ->check(CLI::ExistingFile);
    app->add_option("--qa", o->qa, "Pre-generated question sets JSONL")
        ->check(CLI::ExistingFile);
    app->add_option("--bench", o->bench, "Bench JSONL used by --gen-qa")
        ->check(CLI::ExistingFile);
    app->add_flag("--gen-qa", o->gen_qa,
                  "Generate missing question sets from bench captions");
    app->add_flag("--no-triplets", o->no_triplets,
                  "Omit per-triplet detail from the report");
    cmds.push_back({"vdcscore", app,
                    [o](RunContext& c) { return vdcscore(*o, c); }});
  }
  {
    auto o = std::make_shared<VddOptions>();
    auto* app = root.add_subcommand(
        "vdd", "Whole-caption LLM judge baseline");
    add_common(app, ctx);
    add_llm_options(app, o->llm);
    app->add_option("--preds", o->preds, "Predictions JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    app->add_option("--refs", o->refs, "References JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    app->add_option("--category", o->category,
                    "Caption category taken from bench-style references")
        ->capture_default_str();
    cmds.push_back({"vdd", app, [o](RunContext& c) { return vdd(*o, c); }});
  }
  {
    auto o = std::make_shared<CorrelateOptions>();
    auto* app = root.add_subcommand(
        "correlate", "Pearson correlation between per-model score columns");
    add_common(app, ctx);
    app->add_option("--scores", o->scores,
                    "JSONL rows {model, <metric>: number, ...}")
        ->required()
        ->check(CLI::ExistingFile);
    app->add_option("--metrics", o->metrics, "Columns to correlate")
        ->delimiter(',');
    cmds.push_back({"correlate", app,
                    [o](RunContext& c) { return correlate(*o, c); }});
  }
}

}  // namespace capeval::cli
