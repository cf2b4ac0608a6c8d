#pragma once

// Bundled prompt templates for every model-facing operation. Placeholders
// use {name} syntax and are substituted verbatim by render(); everything
// outside a placeholder is emitted byte-for-byte, which the template
// fidelity tests rely on. Each template can be overridden by a text file of
// the same name in a user-supplied directory.

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "vlrm/errors.hpp"

namespace vlrm {
namespace prompts {

inline constexpr std::string_view kGenrmUser =
    R"(<image>Given an image and a corresponding prompt, please serve as an unbiased and fair judge to evaluate the quality of the response provided by a Large Multimodal Model (LMM). Your task is provided as follows:
Prompt: {prompt}
Response: {response})";

inline constexpr std::string_view kIftRound1User =
    R"(<image>Given an image and a corresponding prompt, please serve as an unbiased and fair judge to evaluate the quality of the response provided by a Large Multimodal Model (LMM). Your task is provided as follows:
Prompt: {prompt}
Response: {response}
{instruction})";

inline constexpr std::string_view kIftCritiqueInstruction = "Generate a critique of the response first.";

inline constexpr std::string_view kIftDescriptiveInstruction = "Let's think step by step";

inline constexpr std::string_view kIftFollowupUser = "Overall, is this response of high quality?";

inline constexpr std::string_view kJudgeUser =
    R"(<image>Given an image and a corresponding prompt, please serve as an unbiased and fair judge to evaluate the quality of the response provided by a Large Multimodal Model (LMM). Determine which response is better and explain your reasoning with specific details. Your task is provided as follows:
Prompt: {prompt}
Response A: {response_a}
Response B: {response_b})";

inline constexpr std::string_view kExtractionSystem =
    R"(###TASK DESCRIPTION###
Your are a helpful entities extractor. Please help me to extract the OBJECTS mentioned in a description about an image.
###ATTENTION###
1. Only extract the descriptions of objects that are described with certainty. For example, in the sentence "there's a white car parked, perhaps belonging to one of the hotel guests," the "hotel guests" part is included within "perhaps," indicating uncertainty. Therefore, you only need extract "a white car" that is described with certainty.
2. Avoid extracting abstract or non-specific entities (such as "cozy atmosphere", "excitement", "sky view")!!!
3. Your response should strictly start with "Objects:", followed by the extracted objects separated by commas.

###IN-CONTEXT EXAMPLES###
Here are some examples for your reference.

Example1: {example1}

Example2: {example2}

Example3: {example3})";

inline constexpr std::string_view kExtractionExample1 =
    R"(Description: A man is riding a brown horse along the shoreline at sunset. Objects: a man, a brown horse, the shoreline)";

inline constexpr std::string_view kExtractionExample2 =
    R"(Description: There's a white car parked, perhaps belonging to one of the hotel guests. Objects: a white car)";

inline constexpr std::string_view kExtractionExample3 =
    R"(Description: The room radiates a cozy atmosphere, with a wooden table set near the window. Objects: a wooden table, the window)";

inline constexpr std::string_view kExtractionUser = "Description: {description}";

inline constexpr std::string_view kFalseRejectionSystem =
    R"(You are an AI model designed to evaluate the accuracy of responses based on a given image, a list of detected objects from the image, and a provided prompt. Your task is to determine whether the response is generally correct in relation to the image, considering the detected objects as a reference.

### **Evaluation Criteria:**
1. **General Accuracy:**
   - The response should be broadly correct based on the image content.
   - Minor inaccuracies or missing details are acceptable as long as the overall meaning remains correct.

2. **Consistency with Detected Objects:**
   - The detected object list may not include all objects in the image.
   - If the response describes something that is in the detected object list, it is likely correct.
   - If the response describes something not in the detected object list, it may still be correct if it is a reasonable inference.

3. **Reasonable Inference:**
   - The response can include reasonable assumptions based on the detected objects.
   - However, if the response describes something that contradicts the detected objects or is highly specific without clear evidence, it should be considered incorrect.

4. **Handling Uncertainty:**
   - If the response makes a claim that cannot be verified based on the detected objects alone, but is plausible, consider it correct.
   - If the response makes a claim that is clearly false based on the detected objects, consider it incorrect.

### **Output Format:**
Respond with only one word:
- Correct: If the response is generally accurate.
- Incorrect: If the response contains clear errors or contradictions.)";

inline constexpr std::string_view kFalseRejectionUser =
    R"(<image>Detected Objects: {objects}
Prompt: {prompt}
Response: {response})";

inline constexpr std::string_view kAlterUser =
    R"(I will give you a description of a image and some objects in the description, and your task is to replace these objects with any other objects. Please output the modified description.

Description: {description}

Objects: {objects})";

inline constexpr std::string_view kCritiqueSystem =
    R"(You are an advanced Multimodal Large Language Model. Your task is to generate a critique of the response based on an image, a prompt, and an extracted object list.

### **Input**
1. **Image**
2. **Object List**: The object list contains some, but not all, objects in the image. It can help identify missing elements, but you must **not rely solely on it** always refer to the image itself.
3. **Prompt**
4. **Response**

### **Output**
**Critique**

### **Note**
1. Critiques should include only **crucial and obvious** errors in the MLLM's response and provide clear justifications for why they are incorrect.
2. If an object is **semantically important** to the scene or context, its absence in the response is considered an error. However, the omission of **minor or background objects** is acceptable unless they are explicitly relevant to the prompt.
3. Please only point out the errors and do not judge whether the response is correct or not.)";

inline constexpr std::string_view kCritiqueUser =
    R"(<image>Object List: {objects}
Prompt: {prompt}
Response: {response})";

inline constexpr std::string_view kDescriptiveSystem =
    R"(You are an AI assistant designed to evaluate the quality of responses.

### **Input**
1. **Image**
2. **Object List**: The object list contains some, but not all, objects in the image. It can help identify missing elements, but you must **not rely solely on it** always refer to the image itself.
3. **Prompt**
4. **Response**
5. **Judgment**: Yes or No, indicating whether the response is of high quality

### **Output**
**Explanation**: A step-by-step Chain-of-Thought (CoT) explanation that justifies why the response is considered high quality (Yes) or not (No).)";

inline constexpr std::string_view kDescriptiveUser =
    R"(<image>Object List: {objects}
Prompt: {prompt}
Response: {response}
Judgment: {judgment})";

inline constexpr std::string_view kJudgeRetrySuffix =
    "\nPlease answer with \"Response A\" or \"Response B\" only.";

/// Substitutes {name} placeholders with the supplied values. Placeholders
/// with no supplied value are left untouched.
inline std::string render(std::string_view tpl, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tpl.size());
  std::size_t pos = 0;
  while (pos < tpl.size()) {
    auto open = tpl.find('{', pos);
    if (open == std::string_view::npos) {
      out.append(tpl.substr(pos));
      break;
    }
    auto close = tpl.find('}', open);
    if (close == std::string_view::npos) {
      out.append(tpl.substr(pos));
      break;
    }
    out.append(tpl.substr(pos, open - pos));
    std::string name(tpl.substr(open + 1, close - open - 1));
    auto it = values.find(name);
    if (it != values.end()) {
      out.append(it->second);
    } else {
      out.append(tpl.substr(open, close - open + 1));
    }
    pos = close + 1;
  }
  return out;
}

}  // namespace prompts

/// The resolved template set used by a run. Defaults come from the bundled
/// constants above; any template can be replaced by dropping a file named
/// `<key>.txt` into an override directory.
class PromptSet {
 public:
  PromptSet() {
    templates_ = {
        {"genrm_user", std::string(prompts::kGenrmUser)},
        {"ift_round1_user", std::string(prompts::kIftRound1User)},
        {"ift_critique_instruction", std::string(prompts::kIftCritiqueInstruction)},
        {"ift_descriptive_instruction", std::string(prompts::kIftDescriptiveInstruction)},
        {"ift_followup_user", std::string(prompts::kIftFollowupUser)},
        {"judge_user", std::string(prompts::kJudgeUser)},
        {"extraction_system", std::string(prompts::kExtractionSystem)},
        {"extraction_example1", std::string(prompts::kExtractionExample1)},
        {"extraction_example2", std::string(prompts::kExtractionExample2)},
        {"extraction_example3", std::string(prompts::kExtractionExample3)},
        {"extraction_user", std::string(prompts::kExtractionUser)},
        {"false_rejection_system", std::string(prompts::kFalseRejectionSystem)},
        {"false_rejection_user", std::string(prompts::kFalseRejectionUser)},
        {"alter_user", std::string(prompts::kAlterUser)},
        {"critique_system", std::string(prompts::kCritiqueSystem)},
        {"critique_user", std::string(prompts::kCritiqueUser)},
        {"descriptive_system", std::string(prompts::kDescriptiveSystem)},
        {"descriptive_user", std::string(prompts::kDescriptiveUser)},
    };
  }

  static PromptSet with_overrides(const std::filesystem::path& dir) {
    PromptSet set;
    if (!std::filesystem::is_directory(dir)) {
      throw ConfigError("prompt override path is not a directory: " + dir.string());
    }
    for (auto& [key, value] : set.templates_) {
      auto file = dir / (key + ".txt");
      if (std::filesystem::exists(file)) {
        std::ifstream in(file, std::ios::binary);
        value.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
        // Trailing newline from text editors is not part of the template.
        while (!value.empty() && (value.back() == '\n' || value.back() == '\r')) value.pop_back();
      }
    }
    return set;
  }

  const std::string& get(const std::string& key) const {
    auto it = templates_.find(key);
    if (it == templates_.end()) throw ConfigError("unknown prompt template \"" + key + "\"");
    return it->second;
  }

  std::string render(const std::string& key, const std::map<std::string, std::string>& values) const {
    return prompts::render(get(key), values);
  }

  const std::map<std::string, std::string>& all() const { return templates_; }

  /// The extraction system prompt with its in-context examples spliced in.
  std::string extraction_system_resolved() const {
    return prompts::render(get("extraction_system"), {{"example1", get("extraction_example1")},
                                                      {"example2", get("extraction_example2")},
                                                      {"example3", get("extraction_example3")}});
  }

 private:
  std::map<std::string, std::string> templates_;
};

}  // namespace vlrm
