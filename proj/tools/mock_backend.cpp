// Copyright 2026 The Turnwise Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Standalone scripted OpenAI-compatible server for trying the CLI and the
// gateway without a GPU. Every prompt gets the same multi-turn script.

#include <CLI11.hpp>

#include <chrono>
#include <csignal>
#include <iostream>
#include <thread>

#include "turnwise/testing/mock_backend.hpp"

namespace {
volatile std::sig_atomic_t g_stop = 0;
}

int main(int argc, char** argv) {
  CLI::App app{"Scripted mock inference server"};
  int turns = 3;
  std::string answer = "4";
  int token_delay_ms = 0;
  app.add_option("--turns", turns, "Turns in the scripted response")
      ->check(CLI::PositiveNumber);
  app.add_option("--answer", answer, "Boxed answer given at every turn");
  app.add_option("--token-delay-ms", token_delay_ms, "Delay between stream chunks");
  CLI11_PARSE(app, argc, argv);

  std::vector<turnwise::testing::ScriptTurn> script;
  for (int k = 1; k <= turns; ++k) {
    std::string opener = k == 1 ? "Let me work it out." : "Wait, let me check again.";
    script.push_back({opener + " Step " + std::to_string(k) + " gives " + answer + ".",
                      "The answer is \\boxed{" + answer + "}."});
  }
  turnwise::testing::MockOpenAiServer server(turnwise::testing::turn_script(script));
  turnwise::testing::FaultPlan plan;
  plan.token_delay = std::chrono::milliseconds(token_delay_ms);
  server.set_faults(plan);
  std::signal(SIGINT, [](int) { g_stop = 1; });
  std::signal(SIGTERM, [](int) { g_stop = 1; });
  std::cout << "mock backend at " << server.base_url() << std::endl;
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
  return 0;
}
