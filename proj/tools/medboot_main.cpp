#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <medboot/medboot.hpp>

namespace {

struct CommonOpts {
  std::size_t n_imputations = 20;
  std::size_t n_boot = 1000;
  double level = 0.95;
  std::uint64_t seed = 12345;
  std::size_t workers = 0;
  std::string format = "table";
  std::string out_path;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--nimpute", o.n_imputations, "imputations per chain (K)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--nboot", o.n_boot, "bootstrap replicates (B)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--level", o.level, "confidence level in (0,1)")
      ->capture_default_str();
  cmd->add_option("--seed", o.seed, "RNG seed")
      ->envname("MEDBOOT_SEED")
      ->capture_default_str();
  cmd->add_option("--workers", o.workers,
                  "worker threads (default: all hardware threads)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--format", o.format, "output format")
      ->check(CLI::IsMember({"table", "csv", "json"}))
      ->capture_default_str();
  cmd->add_option("--out", o.out_path, "write the report to this file");
}

void add_gen_flags(CLI::App* cmd, medboot::GenParams& gen) {
  cmd->add_option("--true-a", gen.a, "true X->M coefficient")
      ->capture_default_str();
  cmd->add_option("--true-b", gen.b, "true M->Y coefficient")
      ->capture_default_str();
  cmd->add_option("--true-cprime", gen.c_prime, "true direct effect")
      ->capture_default_str();
  cmd->add_option("--aux-corr", gen.aux_corr,
                  "correlation of each auxiliary with its anchor")
      ->capture_default_str();
  cmd->add_option("--n-aux", gen.n_aux, "number of auxiliary variables")
      ->capture_default_str();
}

int emit(const medboot::ordered_json& doc, const CommonOpts& o) {
  std::string text;
  if (o.format == "json")
    text = medboot::render_json(doc);
  else if (o.format == "csv")
    text = medboot::render_csv(doc);
  else
    text = medboot::render_table(doc);
  if (o.out_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream f(o.out_path);
    if (!f)
      throw medboot::IoError("cannot open " + o.out_path + " for writing");
    f << text;
    if (!f) throw medboot::IoError("write failed: " + o.out_path);
  }
  return 0;
}

medboot::Mechanism parse_mechanism(const std::string& s) {
  if (s == "mcar") return medboot::Mechanism::Mcar;
  if (s == "mar") return medboot::Mechanism::Mar;
  if (s == "mnar") return medboot::Mechanism::Mnar;
  throw medboot::InvalidArgument("unknown mechanism '" + s +
                                 "' (expected mcar, mar, or mnar)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "single-mediator mediation analysis with missing data: "
      "multivariate-normal multiple imputation nested in a nonparametric "
      "bootstrap"};
  app.require_subcommand(1);

  auto* analyze_cmd = app.add_subcommand(
      "analyze", "estimate the mediation model from a CSV with missing values");
  std::string data_path, x_col, m_col, y_col;
  std::vector<std::string> aux_cols;
  double missing_code = 0;
  CommonOpts a_opts;
  analyze_cmd->add_option("--data", data_path, "input CSV path")->required();
  analyze_cmd->add_option("--x", x_col, "treatment/exposure column")->required();
  analyze_cmd->add_option("--m", m_col, "mediator column")->required();
  analyze_cmd->add_option("--y", y_col, "outcome column")->required();
  analyze_cmd->add_option("--aux", aux_cols, "auxiliary columns (comma-separated)")
      ->delimiter(',');
  auto* mc_opt = analyze_cmd->add_option(
      "--missing-code", missing_code,
      "numeric value meaning missing (empty cells always count)");
  add_common(analyze_cmd, a_opts);

  auto* sim_cmd = app.add_subcommand(
      "simulate", "run a generate/mask/analyze simulation study");
  std::string sim_mech = "mcar";
  double sim_prop = 0.1;
  bool sim_use_aux = true;
  std::size_t sim_reps = 200, sim_n = 100;
  medboot::GenParams sim_gen;
  CommonOpts s_opts;
  sim_cmd->add_option("--mechanism", sim_mech, "mcar, mar, or mnar")
      ->capture_default_str();
  sim_cmd->add_option("--prop", sim_prop, "missing proportion in M and in Y")
      ->capture_default_str();
  sim_cmd->add_flag("--use-aux,!--no-aux", sim_use_aux,
                    "include auxiliary variables in the analysis");
  sim_cmd->add_option("--reps", sim_reps, "replications (R)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sim_cmd->add_option("--n", sim_n, "sample size per replication")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  add_gen_flags(sim_cmd, sim_gen);
  add_common(sim_cmd, s_opts);

  auto* sens_cmd = app.add_subcommand(
      "sensitivity",
      "relative deviance of the mediated-effect estimate and SE across "
      "imputation counts");
  std::vector<std::size_t> k_grid;
  std::size_t k_ref = 0;
  std::string sens_mech = "mcar";
  double sens_prop = 0.1;
  bool sens_use_aux = true;
  std::size_t sens_n = 100;
  medboot::GenParams sens_gen;
  CommonOpts x_opts;
  sens_cmd->add_option("--k-grid", k_grid, "imputation counts, comma-separated")
      ->required()
      ->delimiter(',');
  sens_cmd->add_option("--k-ref", k_ref, "reference imputation count")
      ->required()
      ->check(CLI::PositiveNumber);
  sens_cmd->add_option("--mechanism", sens_mech, "mcar, mar, or mnar")
      ->capture_default_str();
  sens_cmd->add_option("--prop", sens_prop, "missing proportion in M and in Y")
      ->capture_default_str();
  sens_cmd->add_flag("--use-aux,!--no-aux", sens_use_aux,
                     "include auxiliary variables in the analysis");
  sens_cmd->add_option("--n", sens_n, "sample size of the fixed dataset")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  add_gen_flags(sens_cmd, sens_gen);
  add_common(sens_cmd, x_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (analyze_cmd->parsed()) {
      const medboot::RoleSpec spec{x_col, m_col, y_col, aux_cols};
      std::optional<double> code;
      if (mc_opt->count() > 0) code = missing_code;
      const medboot::Dataset ds = medboot::load_dataset(data_path, spec, code);
      medboot::AnalyzeOptions opts;
      opts.workers = a_opts.workers;
      const medboot::BootstrapReport rep =
          medboot::analyze(ds, a_opts.n_boot, a_opts.n_imputations,
                           a_opts.level, medboot::RngKey{a_opts.seed}, opts);
      if (rep.b_effective < rep.b_requested)
        std::cerr << "medboot: warning: dropped "
                  << rep.b_requested - rep.b_effective << " of "
                  << rep.b_requested << " bootstrap replicates\n";
      return emit(medboot::analysis_doc(rep, a_opts.n_imputations, a_opts.seed),
                  a_opts);
    }
    if (sim_cmd->parsed()) {
      medboot::StudyConfig cfg;
      cfg.gen = sim_gen;
      cfg.n = sim_n;
      cfg.mechanism = parse_mechanism(sim_mech);
      cfg.proportion = sim_prop;
      cfg.use_aux = sim_use_aux;
      cfg.replications = sim_reps;
      cfg.n_boot = s_opts.n_boot;
      cfg.n_imputations = s_opts.n_imputations;
      cfg.level = s_opts.level;
      cfg.seed = s_opts.seed;
      const medboot::StudyReport rep = medboot::run_study(cfg, s_opts.workers);
      if (rep.replications_used < rep.replications_requested)
        std::cerr << "medboot: warning: "
                  << rep.replications_requested - rep.replications_used
                  << " of " << rep.replications_requested
                  << " replications failed\n";
      if (rep.dropped_replicates > 0)
        std::cerr << "medboot: warning: dropped " << rep.dropped_replicates
                  << " bootstrap replicates across replications\n";
      return emit(medboot::study_doc(rep, cfg), s_opts);
    }
    if (sens_cmd->parsed()) {
      medboot::StudyConfig cfg;
      cfg.gen = sens_gen;
      cfg.n = sens_n;
      cfg.mechanism = parse_mechanism(sens_mech);
      cfg.proportion = sens_prop;
      cfg.use_aux = sens_use_aux;
      cfg.n_boot = x_opts.n_boot;
      cfg.n_imputations = x_opts.n_imputations;
      cfg.level = x_opts.level;
      cfg.seed = x_opts.seed;
      const medboot::SensitivityReport rep = medboot::imputation_sensitivity(
          cfg, k_grid, k_ref, x_opts.workers);
      return emit(medboot::sensitivity_doc(rep, cfg), x_opts);
    }
  } catch (const std::exception& e) {
    std::cerr << "medboot: error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
