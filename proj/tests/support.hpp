#pragma once

#include <memory>
#include <string>

#include "promptforge/evaluation.hpp"
#include "promptforge/lm.hpp"
#include "promptforge/program.hpp"

namespace pf_test {

using namespace promptforge;

/// One-module question -> answer program with `max_demos` demo slots.
inline Program qa_program(std::size_t max_demos = 0, std::string seed_instruction = "Answer the question.") {
  Program p;
  p.modules.push_back(make_module(0, "answer_question", {"question"}, {{"answer", ""}}, std::move(seed_instruction),
                                  max_demos));
  p.control_flow = sequential_flow(1);
  return p;
}

/// n examples "q<k>" whose gold answer is "a<k>".
inline Dataset qa_dataset(std::size_t n) {
  Dataset d;
  for (std::size_t k = 0; k < n; ++k) {
    Example e;
    e.id = "q" + std::to_string(k);
    e.inputs["question"] = "What is item " + std::to_string(k) + "?";
    e.metadata["answer"] = "a" + std::to_string(k);
    d.examples.push_back(e);
    d.splits["train"].push_back(k);
  }
  return d;
}

/// Answers "What is item k?" with "a<k>" when `correct(k)` holds, else "wrong".
template <typename Pred>
std::shared_ptr<ScriptedLm> qa_lm(Pred correct) {
  auto lm = std::make_shared<ScriptedLm>("wrong");
  lm->on([correct](const LmRequest& r) -> std::optional<std::string> {
    const auto pos = r.prompt.rfind("What is item ");
    if (pos == std::string::npos) return std::nullopt;
    const std::size_t k = std::stoul(r.prompt.substr(pos + 13));
    return correct(k) ? "a" + std::to_string(k) : std::string("wrong");
  });
  return lm;
}

}  // namespace pf_test
