#include <CLI11.hpp>

#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "capeval/error.hpp"
#include "capeval/tokmerge.hpp"
#include "context.hpp"

namespace capeval::cli {

namespace {

struct MergeOptions {
  std::string tokens;
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t patch = 0;
  std::size_t layers = 0;
  double keep_ratio = 1.0;
  std::size_t dim = 16;
  bool art = false;
};

tokmerge::TokenFile random_tokens(std::size_t n, std::size_t d,
                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> data(n * d);
  for (double& x : data) {
    x = 2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0;
  }
  return {tokmerge::TokenMatrix(n, d, std::move(data)),
          tokmerge::SizeVector(n, 1)};
}

int merge_sim(const MergeOptions& o, RunContext& ctx) {
  const auto schedule = tokmerge::compute_schedule(o.width, o.height, o.patch,
                                                   o.layers, o.keep_ratio);
  const std::size_t gw = o.width / o.patch;
  const std::size_t gh = o.height / o.patch;
  const std::size_t n0 = gw * gh;

  tokmerge::TokenFile file = [&] {
    if (o.tokens.empty()) return random_tokens(n0, o.dim, ctx.seed);
    std::ifstream in(ctx.input(o.tokens), std::ios::binary);
    if (!in) throw Error(Errc::kIo, "cannot open token file " + o.tokens);
    std::stringstream ss;
    ss << in.rdbuf();
    return tokmerge::parse_token_file(ss.str());
  }();
  if (file.tokens.rows() != n0) {
    throw Error(Errc::kValidation,
                "token file holds " + std::to_string(file.tokens.rows()) +
                    " tokens but a " + std::to_string(gw) + "x" +
                    std::to_string(gh) + " grid needs " + std::to_string(n0));
  }
  const auto size_sum =
      std::accumulate(file.sizes.begin(), file.sizes.end(), std::int64_t{0});

  const auto run = tokmerge::run_layers(file.tokens, file.sizes,
                                        tokmerge::self_keys(), schedule);
  const auto grid = tokmerge::trace_to_grid(run.trace, gw, gh);

  ctx.write_text("merged.json",
                 tokmerge::dump_token_file(run.tokens, run.sizes) + "\n");
  ctx.write_json("trace.json", {{"grid_w", gw},
                                {"grid_h", gh},
                                {"final_count", run.trace.final_count},
                                {"source_map", run.trace.source_map},
                                {"cluster_grid", grid}});
  ctx.write_json("summary.json",
                 {{"initial_tokens", n0},
                  {"final_tokens", run.tokens.rows()},
                  {"layers", schedule.layers},
                  {"keep_ratio", schedule.keep_ratio},
                  {"per_layer_r", schedule.per_layer_r},
                  {"total_merged", schedule.total()},
                  {"size_sum", size_sum},
                  {"dim", run.tokens.cols()}});
  if (o.art) ctx.write_text("grid.txt", tokmerge::render_grid(grid, gw));
  return 0;
}

}  // namespace

void register_merge(CLI::App& root, RunContext& ctx,
                    std::vector<Command>& cmds) {
  auto o = std::make_shared<MergeOptions>();
  auto* app = root.add_subcommand(
      "merge-sim", "Run layered bipartite token merging and trace the result");
  add_common(app, ctx);
  app->add_option("--tokens", o->tokens,
                  "Token JSON {n, d, data, sizes}; random tokens when omitted")
      ->check(CLI::ExistingFile);
  app->add_option("--width", o->width, "Image width in pixels")->required();
  app->add_option("--height", o->height, "Image height in pixels")->required();
  app->add_option("--patch", o->patch, "Patch size in pixels")->required();
  app->add_option("--layers", o->layers, "Number of merge layers")->required();
  app->add_option("--keep-ratio", o->keep_ratio, "Fraction of tokens kept")
      ->required()
      ->check(CLI::Range(0.0, 1.0));
  app->add_option("--dim", o->dim, "Embedding width of random tokens")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app->add_flag("--art", o->art, "Also write the cluster grid as text art");
  cmds.push_back({"merge-sim", app,
                  [o](RunContext& c) { return merge_sim(*o, c); }});
}

}  // namespace capeval::cli
