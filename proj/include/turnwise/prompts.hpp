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

#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

#include "turnwise/text.hpp"

namespace turnwise::prompts {

// Question/answer template used for evaluation, probing and SFT prompts.
inline constexpr std::string_view kQaTemplate =
    "{Question}\n\nPlease reason step by step, and put your final answer "
    "within \\boxed{}.";

// Prompt asking an LLM to mark reasoning-round boundaries with "[split]".
inline constexpr std::string_view kDecompositionTemplate =
    "You will be provided with a math problem and a solution generated by a "
    "reasoning model. The model's response may contain multiple Reasoning "
    "Rounds.\n"
    "One Reasoning Round is a part of the full model generation and is "
    "defined as a complete reasoning process or verification process that "
    "explicitly contains the final answer.\n"
    "Your task is to carefully analyze the response and segment it into "
    "individual Reasoning Rounds. Specifically, insert \"[split]\" between "
    "every two consecutive Reasoning Rounds.\n"
    "\n"
    "---\n"
    "\n"
    "Problem:\n"
    "{question}\n"
    "\n"
    "Solution:\n"
    "{prediction}\n"
    "\n"
    "---\n"
    "\n"
    "Please give the solution with \"[split]\" tags without any redundant "
    "words.";

inline constexpr std::string_view kSplitTag = "[split]";

inline std::string render_qa(std::string_view problem) {
  return text::replace_all(std::string(kQaTemplate), "{Question}", problem);
}

// Placeholders are substituted in one pass so that a problem containing the
// literal "{prediction}" is not expanded again.
inline std::string render_decomposition(std::string_view tmpl,
                                        std::string_view question,
                                        std::string_view prediction) {
  std::string out;
  out.reserve(tmpl.size() + question.size() + prediction.size());
  size_t pos = 0;
  while (pos < tmpl.size()) {
    if (tmpl.substr(pos).starts_with("{question}")) {
      out.append(question);
      pos += 10;
    } else if (tmpl.substr(pos).starts_with("{prediction}")) {
      out.append(prediction);
      pos += 12;
    } else {
      out.push_back(tmpl[pos++]);
    }
  }
  return out;
}

inline bool has_decomposition_placeholders(std::string_view tmpl) {
  return tmpl.find("{question}") != std::string_view::npos &&
         tmpl.find("{prediction}") != std::string_view::npos;
}

inline std::string load_template_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open prompt template: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string tmpl = ss.str();
  if (!has_decomposition_placeholders(tmpl)) {
    throw std::runtime_error(
        "prompt template must contain {question} and {prediction}: " + path);
  }
  return tmpl;
}

}  // namespace turnwise::prompts
