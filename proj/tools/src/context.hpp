#pragma once

#include <cstdint>
#include <functional>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "capeval/llmclient.hpp"
#include "capeval/prompts.hpp"

namespace CLI {
class App;
}

namespace capeval::cli {

namespace fs = std::filesystem;

/// Per-run state shared by every command: output directory, seed, the
/// streams, and what the run manifest records.
struct RunContext {
  fs::path out_dir = "out";
  std::uint64_t seed = 17;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;

  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;
  nlohmann::json extra = nlohmann::json::object();

  /// Records an input file for digesting; returns it unchanged.
  const fs::path& input(const fs::path& p);
  /// out_dir / name, with the directory created and the file recorded.
  fs::path output(const std::string& name);
  void write_text(const std::string& name, const std::string& text);
  void write_json(const std::string& name, const nlohmann::json& j);
  void write_jsonl(const std::string& name,
                   const std::vector<nlohmann::json>& rows);
};

struct LlmOptions {
  std::string backend = "http";
  std::string fixtures;
  bool mock_rules = false;
  std::string cache;
  bool no_cache = false;
  std::size_t concurrency = 4;
  std::string prompts_dir;
};

void add_llm_options(CLI::App* app, LlmOptions& o);

struct LlmSetup {
  prompts::PromptTemplates templates;
  std::unique_ptr<llm::LlmClient> client;

  /// Copies client statistics and the template version into the manifest.
  void record(RunContext& ctx) const;
};

LlmSetup make_llm(const LlmOptions& o, RunContext& ctx);

/// Reads a JSONL file into objects; errors name the line.
std::vector<nlohmann::json> read_jsonl(const fs::path& path);

/// One line per registered command; see the cmd_*.cpp files.
struct Command {
  std::string path;  // e.g. "elo rank"
  CLI::App* app = nullptr;
  std::function<int(RunContext&)> body;
};

void register_merge(CLI::App& root, RunContext& ctx, std::vector<Command>& cmds);
void register_eval(CLI::App& root, RunContext& ctx, std::vector<Command>& cmds);
void register_elo(CLI::App& root, RunContext& ctx, std::vector<Command>& cmds);
void register_bench(CLI::App& root, RunContext& ctx, std::vector<Command>& cmds);

/// Shared --out/--seed flags.
void add_common(CLI::App* app, RunContext& ctx);

bool stop_requested();

}  // namespace capeval::cli
