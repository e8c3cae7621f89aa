#include "capeval/cli.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <fstream>
#include <iostream>

#include "capeval/arena.hpp"
#include "capeval/digest.hpp"
#include "capeval/rule_mock.hpp"
#include "context.hpp"

namespace capeval::cli {

namespace {

std::atomic<bool> g_stop{false};

nlohmann::json option_snapshot(const CLI::App* app) {
  nlohmann::json cfg = nlohmann::json::object();
  for (const CLI::Option* opt : app->get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help") continue;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      cfg[name] = res.size() == 1 ? nlohmann::json(res.front())
                                  : nlohmann::json(res);
    } else if (!opt->get_default_str().empty()) {
      cfg[name] = opt->get_default_str();
    }
  }
  return cfg;
}

nlohmann::json digests(const std::vector<fs::path>& paths) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& p : paths) {
    std::error_code ec;
    if (fs::is_regular_file(p, ec)) {
      out[p.generic_string()] = sha256_file(p);
    } else {
      out[p.generic_string()] = nullptr;
    }
  }
  return out;
}

void write_manifest(RunContext& ctx, const std::string& command,
                    const CLI::App* app, const std::string& started,
                    int exit_code, const std::string& error) {
  nlohmann::json m{{"command", command},
                   {"tool_version", kToolVersion},
                   {"config", option_snapshot(app)},
                   {"seed", ctx.seed},
                   {"inputs", digests(ctx.inputs)},
                   {"outputs", digests(ctx.outputs)},
                   {"started", started},
                   {"finished", elo::utc_timestamp()},
                   {"exit_code", exit_code}};
  if (!error.empty()) m["error"] = error;
  for (const auto& [k, v] : ctx.extra.items()) m[k] = v;
  std::error_code ec;
  fs::create_directories(ctx.out_dir, ec);
  std::ofstream f(ctx.out_dir / "manifest.json", std::ios::binary | std::ios::trunc);
  if (f) f << m.dump(2) << '\n';
}

void register_prompts(CLI::App& root, RunContext& ctx,
                      std::vector<Command>& cmds) {
  auto* app = root.add_subcommand(
      "prompts", "Export the built-in prompt templates for editing");
  add_common(app, ctx);
  cmds.push_back({"prompts", app, [](RunContext& c) {
                    const fs::path dir = c.out_dir / "prompts";
                    prompts::PromptTemplates::defaults().save(dir);
                    for (const auto& e : fs::directory_iterator(dir)) {
                      c.outputs.push_back(e.path());
                    }
                    std::sort(c.outputs.begin(), c.outputs.end());
                    *c.out << "wrote " << dir.generic_string() << "\n";
                    return 0;
                  }});
}

}  // namespace

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::kDimension:
    case Errc::kRange:
    case Errc::kTooFewTokens:
    case Errc::kDegenerateKey:
    case Errc::kDomain:
    case Errc::kConfiguration:
    case Errc::kValidation:
    case Errc::kIo:
      return kExitUsage;
    case Errc::kNoData:
    case Errc::kUndefinedCorrelation:
    case Errc::kNotFound:
    case Errc::kConflict:
      return kExitData;
    case Errc::kTransport:
    case Errc::kRequest:
    case Errc::kProtocol:
    case Errc::kExtraction:
    case Errc::kJudging:
    case Errc::kConstruction:
      return kExitBackend;
    case Errc::kEnvironment:
      return kExitEnvironment;
  }
  return kExitEnvironment;
}

void request_stop() { g_stop.store(true); }

bool stop_requested() { return g_stop.load(); }

const fs::path& RunContext::input(const fs::path& p) {
  inputs.push_back(p);
  return p;
}

fs::path RunContext::output(const std::string& name) {
  const fs::path p = out_dir / name;
  std::error_code ec;
  fs::create_directories(p.parent_path(), ec);
  if (ec) {
    throw Error(Errc::kEnvironment,
                "cannot create " + p.parent_path().string() + ": " + ec.message());
  }
  if (std::find(outputs.begin(), outputs.end(), p) == outputs.end()) {
    outputs.push_back(p);
  }
  return p;
}

void RunContext::write_text(const std::string& name, const std::string& text) {
  const fs::path p = output(name);
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f << text;
  if (!f) throw Error(Errc::kEnvironment, "cannot write " + p.string());
  *out << "wrote " << p.generic_string() << "\n";
}

void RunContext::write_json(const std::string& name, const nlohmann::json& j) {
  write_text(name, j.dump(2) + "\n");
}

void RunContext::write_jsonl(const std::string& name,
                             const std::vector<nlohmann::json>& rows) {
  std::string text;
  for (const auto& r : rows) text += r.dump() + "\n";
  write_text(name, text);
}

void add_common(CLI::App* app, RunContext& ctx) {
  app->add_option("--out", ctx.out_dir, "Output directory")
      ->capture_default_str();
  app->add_option("--seed", ctx.seed, "Seed for every random choice")
      ->capture_default_str();
}

void add_llm_options(CLI::App* app, LlmOptions& o) {
  app->add_option("--backend", o.backend, "Chat backend")
      ->check(CLI::IsMember({"http", "mock"}))
      ->capture_default_str();
  app->add_option("--fixtures", o.fixtures,
                  "Mock fixtures JSONL {digest, response}; strict unless "
                  "--mock-rules")
      ->check(CLI::ExistingFile);
  app->add_flag("--mock-rules", o.mock_rules,
                "Fall back to the rule responder when no fixture matches");
  app->add_option("--cache", o.cache,
                  "Response cache JSONL (default <out>/llm_cache.jsonl)");
  app->add_flag("--no-cache", o.no_cache, "Disable the response cache");
  app->add_option("--concurrency", o.concurrency, "Max concurrent LLM calls")
      ->check(CLI::Range(1, 256))
      ->capture_default_str();
  app->add_option("--prompts", o.prompts_dir,
                  "Directory of prompt template overrides")
      ->check(CLI::ExistingDirectory);
}

LlmSetup make_llm(const LlmOptions& o, RunContext& ctx) {
  LlmSetup s;
  s.templates = o.prompts_dir.empty()
                    ? prompts::PromptTemplates::defaults()
                    : prompts::PromptTemplates::load(ctx.input(o.prompts_dir));
  std::shared_ptr<llm::Backend> backend;
  if (o.backend == "mock") {
    auto mock = std::make_shared<llm::MockBackend>();
    if (!o.fixtures.empty()) mock->load_fixtures(ctx.input(o.fixtures));
    if (o.fixtures.empty() || o.mock_rules) {
      mock->set_responder(mock::RuleResponder(s.templates));
    }
    backend = mock;
  } else {
    auto cfg = llm::BackendConfig::from_env();
    cfg.max_concurrency = o.concurrency;
    try {
      cfg.validate();
    } catch (const Error& e) {
      throw Error(Errc::kEnvironment, e.what());
    }
    backend = std::make_shared<llm::HttpBackend>(cfg);
  }
  std::shared_ptr<llm::ResponseCache> cache;
  if (!o.no_cache) {
    const fs::path p = o.cache.empty() ? ctx.out_dir / "llm_cache.jsonl"
                                       : fs::path(o.cache);
    std::error_code ec;
    if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
    cache = std::make_shared<llm::ResponseCache>(p);
  }
  s.client = std::make_unique<llm::LlmClient>(backend, o.concurrency, cache);
  return s;
}

void LlmSetup::record(RunContext& ctx) const {
  const auto st = client->stats();
  ctx.extra["template_version"] = templates.version;
  ctx.extra["llm"] = {{"backend", client->backend().name()},
                      {"backend_calls", st.backend_calls},
                      {"cache_hits", st.cache_hits},
                      {"peak_in_flight", st.peak_in_flight}};
}

std::vector<nlohmann::json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIo, "cannot open " + path.string());
  std::vector<nlohmann::json> rows;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::kValidation, path.string() + ":" + std::to_string(n) +
                                         ": invalid JSON: " + e.what());
    }
    if (!rows.back().is_object()) {
      throw Error(Errc::kValidation,
                  path.string() + ":" + std::to_string(n) + ": not an object");
    }
  }
  return rows;
}

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  g_stop.store(false);
  RunContext ctx;
  ctx.out = &out;
  ctx.err = &err;
  ctx.seed = kDefaultSeed;

  CLI::App app{"Caption evaluation toolkit: token merging, caption metrics, "
               "LLM-judged scoring, Elo arena, benchmark corpus tools",
               "capeval"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));
  std::vector<Command> cmds;
  register_merge(app, ctx, cmds);
  register_eval(app, ctx, cmds);
  register_elo(app, ctx, cmds);
  register_bench(app, ctx, cmds);
  register_prompts(app, ctx, cmds);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  const Command* cmd = nullptr;
  for (const auto& c : cmds) {
    if (c.app->parsed()) cmd = &c;
  }
  if (cmd == nullptr) {
    err << "no command selected\n" << app.help();
    return kExitUsage;
  }

  const std::string started = elo::utc_timestamp();
  int rc = kExitOk;
  std::string error;
  try {
    rc = cmd->body(ctx);
  } catch (const Error& e) {
    rc = exit_code_for(e.code());
    error = std::string(to_string(e.code())) + ": " + e.what();
  } catch (const nlohmann::json::exception& e) {
    rc = kExitUsage;
    error = std::string("format: ") + e.what();
  } catch (const fs::filesystem_error& e) {
    rc = kExitEnvironment;
    error = std::string("environment: ") + e.what();
  } catch (const std::exception& e) {
    rc = kExitEnvironment;
    error = std::string("internal: ") + e.what();
  }
  if (!error.empty()) err << "error: " << error << "\n";
  write_manifest(ctx, cmd->path, cmd->app, started, rc, error);
  return rc;
}

}  // namespace capeval::cli
