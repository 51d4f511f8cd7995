// lgc: classify germs, compare them, run the randomized verification suites and
// solve / continue boundary value problems. JSON payload on stdout, logs on stderr.
//
// exit 0 definitive answer, 1 verification failure, 2 indeterminate, 3 bad input

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "lgc/bvp.hpp"
#include "lgc/classify.hpp"
#include "lgc/io.hpp"
#include "lgc/splitting.hpp"
#include "lgc/verify.hpp"

namespace {

using lgc::json;

enum Exit { kOk = 0, kVerifyFailed = 1, kIndeterminate = 2, kBadInput = 3 };

void setup_logging() {
  auto log = spdlog::stderr_color_mt("lgc");
  log->set_pattern("lgc: %l: %v");
  spdlog::set_default_logger(log);
  const char* env = std::getenv("LGC_LOG");
  const std::string level = env ? env : "error";
  if (level == "debug") spdlog::set_level(spdlog::level::debug);
  else if (level == "info") spdlog::set_level(spdlog::level::info);
  else spdlog::set_level(spdlog::level::err);
}

int emit(const json& payload, int code) {
  std::cout << payload.dump(2) << "\n";
  return code;
}

int fail(const lgc::Error& e) {
  spdlog::error("{}", e.what());
  return emit({{"error", std::string(lgc::to_string(e.code()))}, {"message", e.what()}}, kBadInput);
}

int cmd_classify(const std::string& file) {
  const lgc::Jet f = lgc::jet_from_json(lgc::read_json_file(file));
  spdlog::info("classifying jet in {} variables, degree {}", f.nvars(), f.degree());
  try {
    const auto c = lgc::classify(f);
    const auto sig = lgc::split(f).signature;
    json out = lgc::class_to_json(c);
    out["signature"] = {sig.plus, sig.minus};
    return emit(out, kOk);
  } catch (const lgc::Error& e) {
    if (e.code() != lgc::ErrorCode::Indeterminate) throw;
    spdlog::info("{}", e.what());
    return emit({{"class", "indeterminate"}, {"reason", e.what()}}, kIndeterminate);
  }
}

int cmd_equivalent(const std::string& fa, const std::string& fb, bool strict) {
  const lgc::Jet a = lgc::jet_from_json(lgc::read_json_file(fa), "a");
  const lgc::Jet b = lgc::jet_from_json(lgc::read_json_file(fb), "b");
  const auto v = strict ? lgc::right_equivalent_same_vars(a, b) : lgc::stably_right_equivalent(a, b);
  if (v.reason == lgc::VerdictReason::VarCountMismatch)
    throw lgc::Error(lgc::ErrorCode::VarCountMismatch, "--strict needs jets in the same number of variables");
  json out{{"mode", strict ? "strict" : "stable"},
           {"equivalent", v.equivalent},
           {"reason", lgc::to_string(v.reason)},
           {"detail", v.detail}};
  if (v.witness_class)
    out["classes"] = {lgc::to_string(v.witness_class->first), lgc::to_string(v.witness_class->second)};
  return emit(out, v.reason == lgc::VerdictReason::Indeterminate ? kIndeterminate : kOk);
}

int cmd_verify(const std::string& lemma, int trials, std::uint64_t seed, bool inject) {
  if (trials < 1) throw lgc::Error(lgc::ErrorCode::InvalidInput, "--trials must be >= 1");
  lgc::SuiteReport rep;
  if (lemma == "hformula") rep = lgc::verify_hformula(trials, seed);
  else if (lemma == "switchon") rep = lgc::verify_switchon(trials, seed, inject);
  else rep = lgc::verify_structure_independence(trials, seed);
  json results = json::array();
  for (const auto& t : rep.trials) {
    results.push_back({{"trial", t.trial},
                       {"pass", t.pass},
                       {"residual", t.residual},
                       {"origin_error", t.origin_error},
                       {"detail", t.detail}});
    if (!t.pass) spdlog::error("trial {} failed: {}", t.trial, t.detail);
  }
  json out{{"lemma", rep.lemma},
           {"seed", rep.seed},
           {"trials", trials},
           {"max_residual", rep.max_residual()},
           {"all_pass", rep.all_pass()},
           {"results", results}};
  return emit(out, rep.all_pass() ? kOk : kVerifyFailed);
}

std::string write_file(const std::filesystem::path& dir, const std::string& name, const std::string& body) {
  const auto path = dir / name;
  std::ofstream f(path);
  if (!f) throw lgc::Error(lgc::ErrorCode::InvalidInput, "cannot write " + path.string());
  f << body;
  spdlog::info("wrote {}", path.string());
  return path.string();
}

int cmd_bvp(const std::string& action, const std::string& system, const std::string& outdir) {
  const lgc::SystemSpec s = lgc::read_system_spec(system);
  std::error_code ec;
  std::filesystem::create_directories(outdir, ec);
  if (ec) throw lgc::Error(lgc::ErrorCode::InvalidInput, "cannot create " + outdir + ": " + ec.message());
  const int n = s.map.system.n(), l = s.map.system.nparams();

  if (action == "solve") {
    const auto rep = lgc::solve_bvp(s.map, s.boundary, s.mu, s.seeds);
    lgc::BifurcationDiagram d;  // one single-point "branch" per solution, for the shared CSV layout
    json sols = json::array();
    for (const auto& sol : rep.solutions) {
      d.branches.push_back({{s.mu, sol.z, sol.residual, sol.det}});
      json j{{"y", lgc::detail::vector_json(sol.y)},
             {"z", lgc::detail::vector_json(sol.z)},
             {"residual", sol.residual},
             {"det_jacobian", sol.det},
             {"singular", sol.singular}};
      if (sol.singular) {
        lgc::SingularPoint sp{s.mu, sol.z};
        sp.kind = "solution";
        sp.condition = sol.condition();
        try {
          sp.cls = lgc::classify_singular_solution(s.map, s.boundary, s.mu, sol.z, s.continuation.cusp_degree);
          sp.status = "classified";
        } catch (const lgc::Error& e) {
          sp.status = e.code() == lgc::ErrorCode::Indeterminate ? "indeterminate" : "failed";
          d.notes.push_back("solution at z = " + lgc::detail::vector_json(sol.z).dump() + ": " + e.what());
        }
        j["class"] = lgc::label_of(sp);
        d.singular_points.push_back(sp);
      }
      sols.push_back(j);
    }
    for (const auto& note : rep.notes) d.notes.push_back(note);
    std::ostringstream csv;
    lgc::write_branches_csv(csv, d, l, 2 * n);
    json files = {write_file(outdir, "solutions.csv", csv.str()),
                  write_file(outdir, "singular_points.json", lgc::singular_points_json(d).dump(2) + "\n")};
    return emit({{"command", "solve"},
                 {"mu", lgc::detail::vector_json(s.mu)},
                 {"solutions", sols},
                 {"notes", d.notes},
                 {"files", files}},
                kOk);
  }

  const auto d = lgc::continue_branches(s.map, s.boundary, s.box, s.seeds, s.continuation);
  std::size_t points = 0;
  for (const auto& b : d.branches) points += b.size();
  for (const auto& note : d.notes) spdlog::info("{}", note);
  std::ostringstream csv;
  lgc::write_branches_csv(csv, d, l, 2 * n);
  const json sp = lgc::singular_points_json(d);
  json files = {write_file(outdir, "branches.csv", csv.str()),
                write_file(outdir, "singular_points.json", sp.dump(2) + "\n")};
  return emit({{"command", "diagram"},
               {"branches", d.branches.size()},
               {"points", points},
               {"singular_points", sp["singular_points"]},
               {"notes", d.notes},
               {"files", files}},
              kOk);
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Lagrangian contact problems, catastrophe classes and BVP bifurcations"};
  app.require_subcommand(1);

  std::string jet;
  auto* classify = app.add_subcommand("classify", "classify a critical jet");
  classify->add_option("--jet", jet, "jet JSON file")->required();

  std::string fa, fb;
  bool stable = false, strict = false;
  auto* equivalent = app.add_subcommand("equivalent", "decide (stable) right equivalence of two jets");
  equivalent->add_option("--a", fa, "first jet JSON file")->required();
  equivalent->add_option("--b", fb, "second jet JSON file")->required();
  auto* o_stable = equivalent->add_flag("--stable", stable, "stable right equivalence (default)");
  equivalent->add_flag("--strict", strict, "right equivalence in the same variables")->excludes(o_stable);

  std::string action, system, outdir;
  auto* bvp = app.add_subcommand("bvp", "solve a boundary value problem or trace its bifurcation diagram");
  bvp->add_option("action", action, "solve | diagram")->required()->check(CLI::IsMember({"solve", "diagram"}));
  bvp->add_option("--system", system, "system TOML file")->required();
  bvp->add_option("--out", outdir, "output directory")->required();

  std::string lemma;
  int trials = 20;
  std::uint64_t seed = 1;
  bool inject = false;
  auto* verify = app.add_subcommand("verify", "run a randomized property suite");
  verify->add_option("--lemma", lemma, "hformula | switchon | structure-independence")
      ->required()
      ->check(CLI::IsMember({"hformula", "switchon", "structure-independence"}));
  verify->add_option("--trials", trials, "number of trials");
  verify->add_option("--seed", seed, "RNG seed");
  verify->add_flag("--inject-h22", inject, "switchon only: give H a nonzero lower block (must be rejected)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kBadInput;
  }

  try {
    if (*classify) return cmd_classify(jet);
    if (*equivalent) return cmd_equivalent(fa, fb, strict);
    if (*bvp) return cmd_bvp(action, system, outdir);
    return cmd_verify(lemma, trials, seed, inject);
  } catch (const lgc::Error& e) {
    return fail(e);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return emit({{"error", "InvalidInput"}, {"message", e.what()}}, kBadInput);
  }
}
