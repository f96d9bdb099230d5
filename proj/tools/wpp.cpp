// wpp: command line front end for data generation, operator estimation,
// reconstruction, training, evaluation and W2 distances.
//
// Every subcommand accepts `--config FILE` plus one `--key value` flag per
// config key; flags win over the file. Failures print a single line
//   error kind=<kind> message="<text>"
// on stderr and exit with status 1 (2 for usage errors).

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <map>
#include <string>

#include "wpp/wpp.hpp"

namespace {

struct Command {
  std::string name;
  std::string help;
  std::vector<wpp::ConfigKey> schema;
  std::function<void(const wpp::RunConfig&)> run;
};

std::string quoted(std::string s) {
  for (auto& ch : s)
    if (ch == '\n') ch = ' ';
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch;
  }
  return out + "\"";
}

int fail(const std::string& kind, const std::string& message, int code = 1) {
  std::cerr << "error kind=" << kind << " message=" << quoted(message) << "\n";
  return code;
}

std::vector<Command> commands() {
  namespace p = wpp::pipelines;
  return {
      {"gen-data", "generate a reference image, a validation pair and low-res training images", p::gen_data_schema(),
       [](const wpp::RunConfig& c) {
         const auto r = p::gen_data(c);
         std::cout << "manifest " << r.manifest.string() << "\n";
       }},
      {"estimate-op", "estimate a blur kernel and bias from a registered image pair", p::estimate_schema(),
       [](const wpp::RunConfig& c) {
         const auto r = p::run_estimate(c);
         std::cout << "bias " << wpp::io::format_double(r.op.bias) << "\n";
         if (r.kernel_error) std::cout << "kernel_max_abs_error " << wpp::io::format_double(*r.kernel_error) << "\n";
         if (r.bias_error) std::cout << "bias_abs_error " << wpp::io::format_double(*r.bias_error) << "\n";
       }},
      {"reconstruct", "variational super-resolution with the patch W2 prior", p::reconstruct_schema(),
       [](const wpp::RunConfig& c) {
         const auto r = p::run_reconstruct(c);
         const auto& t = r.result.trace;
         std::cout << "objective " << wpp::io::format_double(t.front().total) << " -> "
                   << wpp::io::format_double(t.back().total) << "\n";
         if (r.wpp_metrics)
           std::cout << "psnr wpp " << r.wpp_metrics->psnr << " bicubic " << r.bicubic_metrics->psnr << "\n"
                     << "blur wpp " << r.wpp_metrics->blur_effect << " bicubic " << r.bicubic_metrics->blur_effect
                     << "\n";
       }},
      {"train", "train the feed-forward network on low-res images only", p::train_schema(),
       [](const wpp::RunConfig& c) {
         const auto r = p::run_train(c);
         for (std::size_t e = 0; e < r.result.trace.size(); ++e)
           std::cout << "epoch " << e + 1 << " loss " << r.result.trace[e].loss << "\n";
       }},
      {"eval", "PSNR and blur effect against a ground truth", p::eval_schema(),
       [](const wpp::RunConfig& c) {
         for (const auto& row : p::run_eval(c))
           std::cout << row.method << " psnr " << (row.psnr ? std::to_string(*row.psnr) : "inf (zero mse)")
                     << " blur " << row.blur_effect << "\n";
       }},
      {"w2", "patch W2 distance between two images", p::w2_schema(),
       [](const wpp::RunConfig& c) {
         const auto r = p::run_w2(c);
         std::cout << "semidual " << wpp::io::format_double(r.semidual) << "\n";
         if (r.exact) std::cout << "exact " << wpp::io::format_double(*r.exact) << "\n";
       }},
  };
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"patch-prior super-resolution toolkit"};
  app.require_subcommand(1);
  const auto cmds = commands();
  std::map<CLI::App*, const Command*> by_app;
  std::map<const Command*, std::map<std::string, std::string>> flags;
  std::map<const Command*, std::string> config_path;
  for (const auto& cmd : cmds) {
    auto* sub = app.add_subcommand(cmd.name, cmd.help);
    by_app[sub] = &cmd;
    sub->add_option("--config", config_path[&cmd], "key = value config file");
    for (const auto& key : cmd.schema) {
      std::string help = key.help;
      if (!key.default_value.empty()) help += " [" + key.default_value + "]";
      sub->add_option("--" + key.name, flags[&cmd][key.name], help);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  for (auto* sub : app.get_subcommands()) {
    const Command& cmd = *by_app.at(sub);
    try {
      wpp::RunConfig cfg(cmd.schema);
      if (!config_path[&cmd].empty()) cfg.load_file(config_path[&cmd]);
      for (const auto& key : cmd.schema)
        if (sub->count("--" + key.name)) cfg.set(key.name, flags[&cmd][key.name]);
      cmd.run(cfg);
    } catch (const wpp::Error& e) {
      return fail(e.kind(), e.what());
    } catch (const std::filesystem::filesystem_error& e) {
      return fail("io", e.what());
    } catch (const std::exception& e) {
      return fail("internal", e.what());
    }
  }
  return 0;
}
