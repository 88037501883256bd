// Command line driver: gen | train | sample | eval.
//
// Exit codes: 0 success, 2 configuration/validation failure, 3 numeric failure.

#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pulaski/commands.hpp"

namespace {

// Remaining "--key=value" tokens become config overrides.
void apply_extras(pulaski::RunConfig& cfg, const std::vector<std::string>& extras) {
  for (const std::string& tok : extras) {
    if (tok.rfind("--", 0) != 0)
      throw pulaski::InvalidArgument("unexpected argument: " + tok);
    std::string body = tok.substr(2);
    size_t eq = body.find('=');
    if (eq == std::string::npos)
      throw pulaski::InvalidArgument("override needs --key=value form: " + tok);
    cfg.apply_override(body.substr(0, eq), body.substr(eq + 1));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic segmentation with statistical-distance losses"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  long long seed = -1;
  std::vector<std::string> eval_dirs;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "declarative key=value configuration file");
    sub->add_option("--seed", seed, "seed override");
    sub->add_option("--out", out_dir, "output directory override");
    sub->allow_extras();
  };

  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic multi-annotator dataset");
  CLI::App* train = app.add_subcommand("train", "train a model on a dataset");
  CLI::App* sample = app.add_subcommand("sample", "draw plausible segmentations per test image");
  CLI::App* eval = app.add_subcommand("eval", "distribution-level evaluation of predictions");
  for (CLI::App* sub : {gen, train, sample, eval}) add_common(sub);
  eval->add_option("dirs", eval_dirs, "prediction directories (outputs of `sample`)");

  CLI11_PARSE(app, argc, argv);

  try {
    CLI::App* sub = app.get_subcommands().front();
    pulaski::RunConfig cfg = config_path.empty() ? pulaski::RunConfig()
                                                 : pulaski::RunConfig::from_file(config_path);
    apply_extras(cfg, sub->remaining());
    if (seed >= 0) cfg.apply_override("seed", std::to_string(seed));
    if (!out_dir.empty()) cfg.apply_override("out", out_dir);

    if (sub == gen) {
      pulaski::cmd_gen(cfg);
    } else if (sub == train) {
      pulaski::TrainOutcome out = pulaski::cmd_train(cfg);
      std::printf("checkpoint: %s\nbest epoch %d, val loss %.9g\n", out.checkpoint_path.c_str(),
                  out.best_epoch, out.best_val_loss);
    } else if (sub == sample) {
      pulaski::cmd_sample(cfg);
    } else {
      pulaski::EvalOutcome out = pulaski::cmd_eval(cfg, eval_dirs);
      std::printf("aggregate: %s\n", out.aggregate_json.c_str());
    }
  } catch (const pulaski::NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 3;
  } catch (const pulaski::InvalidArgument& e) {
    std::fprintf(stderr, "invalid configuration: %s\n", e.what());
    return 2;
  } catch (const pulaski::IoError& e) {
    std::fprintf(stderr, "io failure: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
