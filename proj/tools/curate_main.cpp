// curate: command-line front end for the corpus curation toolkit.
#include <iostream>
#include <memory>

#include "cli_common.hpp"
#include "curate/error.hpp"

int main(int argc, char** argv) {
  using namespace curate::cli;
  CLI::App app{"Quality-rated pre-training corpus curation", "curate"};
  app.set_version_flag("--version", std::string(curate::kToolVersion));
  app.require_subcommand(1);
  app.fallthrough();
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON config file; command-line flags take precedence");

  GlobalOptions global;
  app.add_option("--workers", global.workers, "Worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--dry-run", global.dry_run, "Print the resolved configuration and plan, then exit");

  add_ingest(app, global);
  add_annotate(app, global);
  add_sample(app, global);
  add_report(app, global);
  add_finetune(app, global);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cerr, std::cerr);
    return kExitUsage;
  } catch (const UsageError& e) {
    diag("error", "usage", {{"message", e.what()}});
    std::cerr << app.help() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    diag("error", "fatal", {{"message", e.what()}});
    return kExitFatal;
  }
  return kExitOk;
}
