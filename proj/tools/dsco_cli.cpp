// dsco: command-line front end for the concentration pipeline.

#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "dsco/pipeline.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitRefusal = 4;

struct Common {
  std::string config_path;
  bool force = false;
  bool print_config = false;
  std::map<std::string, std::string> overrides;
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config_path, "flat key = value config file");
  cmd->add_flag("--force", common.force, "overwrite existing artifacts");
  cmd->add_flag("--print-config", common.print_config, "print the resolved config before running");
  for (const auto& key : dsco::RunConfig::keys())
    cmd->add_option_function<std::string>(
           "--" + key, [&common, key](const std::string& v) { common.overrides[key] = v; }, "config key " + key)
        ->group("Config keys");
}

dsco::RunConfig resolve(const Common& common) {
  dsco::RunConfig cfg = common.config_path.empty() ? dsco::RunConfig{} : dsco::RunConfig::load(common.config_path);
  for (const auto& [k, v] : common.overrides) cfg.set(k, v);
  if (common.print_config) std::cout << cfg.serialize();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dsco: dataset concentration toolkit"};
  app.require_subcommand(1);

  Common common;
  std::string input;
  std::size_t k = 0;

  auto* train = app.add_subcommand("train-diffusion", "train the toy denoiser and write model.dsco");
  auto* concentrate = app.add_subcommand("concentrate", "NOpt synthesis (plus triggered doping) into concentrated.dsco");
  auto* dope = app.add_subcommand("dope", "add the k highest-confusion real samples to a dataset");
  auto* eval = app.add_subcommand("eval", "train and score a downstream classifier on a dataset");
  auto* bias = app.add_subcommand("bias-demo", "Monte-Carlo region occupancy table");
  for (auto* cmd : {train, concentrate, dope, eval, bias}) add_common(cmd, common);
  dope->add_option("--k", k, "samples to dope (per class when dope.per_class)")->required();
  for (auto* cmd : {dope, eval}) cmd->add_option("--input", input, "dataset path (default: concentrated.dsco)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  namespace pl = dsco::pipeline;
  try {
    const dsco::RunConfig cfg = resolve(common);
    const std::optional<std::filesystem::path> in =
        input.empty() ? std::nullopt : std::optional<std::filesystem::path>(input);
    pl::CommandResult result;
    if (train->parsed()) result = pl::cmd_train_diffusion(cfg, common.force);
    else if (concentrate->parsed()) result = pl::cmd_concentrate(cfg, common.force);
    else if (dope->parsed()) result = pl::cmd_dope(cfg, k, in, common.force);
    else if (eval->parsed()) result = pl::cmd_eval(cfg, in, common.force);
    else result = pl::cmd_bias_demo(cfg, common.force);
    std::cout << result.summary << '\n';
    for (const auto& p : result.artifacts) std::cout << "  wrote " << p.string() << '\n';
    return 0;
  } catch (const dsco::RefusalError& e) {
    std::cerr << "refused: " << e.what() << '\n';
    return kExitRefusal;
  } catch (const dsco::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const dsco::TrainingFailure& e) {
    std::cerr << "training failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
