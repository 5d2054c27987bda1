// Copyright (C) 2026 tersim contributors
// SPDX-License-Identifier: Apache-2.0

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <pthread.h>

#include "CLI11.hpp"
#include "tersim/tersim.h"

namespace {

enum ExitCode { kExitOk = 0, kExitInput = 2, kExitRuntime = 3, kExitEnvironment = 4 };

int exit_code_for(tersim_status s) {
  switch (s) {
    case TERSIM_OK:
      return kExitOk;
    case TERSIM_ERR_INVALID_ARGUMENT:
    case TERSIM_ERR_PARSE:
    case TERSIM_ERR_SCENARIO_INVALID:
    case TERSIM_ERR_UNPAIRED_RECORD:
      return kExitInput;
    case TERSIM_ERR_IO:
    case TERSIM_ERR_PORT_BUSY:
      return kExitEnvironment;
    default:
      return kExitRuntime;
  }
}

struct Owned {
  char* p = nullptr;
  ~Owned() { tersim_string_free(p); }
};

struct Options {
  std::string scenario;
  std::string cohort;
  std::string records;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::string channel_preset;
  std::string format = "json";
  std::string phantom = "aaa_54mm";
  std::string bind = "127.0.0.1";
  std::uint16_t port = 8080;
};

int report_failure(tersim_status s) {
  std::cerr << "tersim: error: " << tersim_status_name(s) << ": " << tersim_last_error_message() << '\n';
  return exit_code_for(s);
}

int emit(tersim_status s, const Owned& json, const Owned& table, const std::string& format) {
  // A failed remote session still produces a result worth printing.
  const char* text = format == "table" ? table.p : json.p;
  if (text) {
    std::cout << text;
    if (format == "json") std::cout << '\n';
    std::cout.flush();
  }
  if (s != TERSIM_OK) return report_failure(s);
  return kExitOk;
}

tersim_run_options run_options(const Options& o) {
  tersim_run_options r{};
  r.channel_preset = o.channel_preset.empty() ? nullptr : o.channel_preset.c_str();
  r.has_seed = o.seed.has_value() ? 1 : 0;
  r.seed = o.seed.value_or(0);
  r.out_dir = o.out_dir.empty() ? nullptr : o.out_dir.c_str();
  return r;
}

int serve(const Options& o) {
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  const char* channel = o.channel_preset.empty() ? "vthd" : o.channel_preset.c_str();
  tersim_server* server = nullptr;
  tersim_status s = tersim_server_create(o.phantom.c_str(), channel, o.bind.c_str(), o.port, &server);
  if (s != TERSIM_OK) return report_failure(s);

  std::cerr << "tersim: serving phantom " << o.phantom << " over channel " << channel << " on ws://" << o.bind << ':'
            << tersim_server_port(server) << "/ws (status at /status)\n";

  tersim_status run_status = TERSIM_OK;
  std::thread runner([&] { run_status = tersim_server_run(server); });
  int sig = 0;
  sigwait(&signals, &sig);
  tersim_server_stop(server);
  runner.join();
  tersim_server_destroy(server);
  if (run_status != TERSIM_OK) return report_failure(run_status);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* level = std::getenv("TERSIM_LOG")) {
    if (tersim_set_log_level(level) != TERSIM_OK)
      std::cerr << "tersim: warning: ignoring TERSIM_LOG: " << tersim_last_error_message() << '\n';
  } else {
    tersim_set_log_level("warn");
  }

  Options o;
  CLI::App app{"Tele-echography robot simulator"};
  app.set_version_flag("--version", std::string(tersim_version()));
  app.require_subcommand(1);

  auto add_format = [&](CLI::App* cmd) {
    cmd->add_option("--format", o.format, "Output format")->check(CLI::IsMember({"json", "table"}))->capture_default_str();
  };
  auto add_run_flags = [&](CLI::App* cmd) {
    cmd->add_option("--out-dir", o.out_dir, "Directory for output files");
    cmd->add_option("--seed", o.seed, "Override the seed from the input file");
    cmd->add_option("--channel-preset", o.channel_preset, "Override the channel: vthd, dsl or satellite");
    add_format(cmd);
  };

  auto* exam = app.add_subcommand("exam", "Run the bedside and remote arms of one scenario");
  exam->add_option("--scenario", o.scenario, "Scenario YAML file")->required();
  add_run_flags(exam);

  auto* campaign = app.add_subcommand("campaign", "Run a synthetic study over a generated cohort");
  campaign->add_option("--cohort", o.cohort, "Cohort YAML file (default cohort when omitted)");
  add_run_flags(campaign);

  auto* stats = app.add_subcommand("stats", "Compute the study report from a records CSV");
  stats->add_option("--records", o.records, "Records CSV file")->required();
  add_format(stats);

  auto* serve_cmd = app.add_subcommand("serve", "Host the slave station for a live operator console");
  serve_cmd->add_option("--port", o.port, "TCP port, 0 picks a free one")->capture_default_str();
  serve_cmd->add_option("--phantom", o.phantom, "Phantom preset")->capture_default_str();
  serve_cmd->add_option("--channel-preset", o.channel_preset, "Channel preset")->default_str("vthd");
  serve_cmd->add_option("--bind", o.bind, "Bind address")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInput;
  }

  Owned json, table;
  if (*exam) {
    const auto opts = run_options(o);
    const auto s = tersim_run_exam(o.scenario.c_str(), &opts, &json.p, &table.p);
    return emit(s, json, table, o.format);
  }
  if (*campaign) {
    const auto opts = run_options(o);
    const auto s = tersim_run_campaign(o.cohort.empty() ? nullptr : o.cohort.c_str(), &opts, &json.p, &table.p);
    return emit(s, json, table, o.format);
  }
  if (*stats) {
    const auto s = tersim_run_stats(o.records.c_str(), &json.p, &table.p);
    return emit(s, json, table, o.format);
  }
  return serve(o);
}
