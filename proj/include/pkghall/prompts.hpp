#pragma once

// The fixed message texts the pipeline sends over the wire. These strings
// are protocol payloads: downstream parsing and replay keys depend on their
// exact bytes, so change them only with a schema version bump.

#include <string>
#include <vector>

#include "pkghall/ecosystem.hpp"

namespace pkghall {

struct ChatMessage {
    std::string role; // "system" | "user" | "assistant"
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

namespace prompts {

inline std::string code_generation_system(Language lang) {
    std::string l = language_display(lang);
    return "You are a coding assistant that generates " + l +
           " code. Provide only the code and add additional explanatory text only when "
           "absolutely necessary. If no code is required to answer the question, simply "
           "reply 'None'.";
}

inline std::string packages_from_code_system(Language lang) {
    std::string l = language_display(lang);
    return "You are a coding assistant that determines " + l +
           " packages necessary to execute code. Respond with only a list of " + l +
           " packages, separated by commas and no additional text or formatting. If there "
           "is no code provided, respond 'None', otherwise the response must begin with "
           "the name of a " + l + " package.";
}

inline std::string packages_from_code_user(Language lang, const std::string& code) {
    return std::string(language_display(lang)) + " packages are required to run this code: " +
           code;
}

inline std::string packages_from_prompt_system(Language lang) {
    std::string l = language_display(lang);
    return "You are a coding assistant that recommends " + l +
           " packages that would be helpful to solve given problems. Respond with only a "
           "list of " + l +
           " packages, separated by commas and no additional text or formatting. The "
           "response must begin with the name of a " + l + " package.";
}

inline std::string packages_from_prompt_user(Language lang, const std::string& prompt) {
    return std::string("Which ") + language_display(lang) +
           " packages would be useful in solving the following coding problem: " + prompt;
}

inline std::string prompt_generation_system(Language lang) {
    std::string l = language_display(lang);
    return "You are a coding assistant that assists users in creating simple prompts that "
           "will be used to generate " + l + " code. No code should be used in the response.";
}

inline std::string prompt_generation_user(Language lang, const std::string& description) {
    std::string l = language_display(lang);
    return "Your answer must begin with 'Generate " + l +
           " code that' and must not be longer than one sentence. Do not include extra "
           "text or formatting (i.e. do not start with 'Sure! Here's a prompt...'). Write "
           "a prompt that would generate " + l +
           " code to accomplish the same tasks as the following package description: " +
           description;
}

// Accepted prompt-generation responses must open with this stem.
inline std::string generated_prompt_stem(Language lang) {
    return "Generate " + std::string(language_display(lang)) + " code that";
}

inline std::string validity_question(Language lang, const std::string& package_name) {
    return "Is " + package_name + " a valid " + std::string(language_display(lang)) +
           " package?";
}

inline std::string regeneration_instruction(const std::vector<std::string>& names) {
    std::string joined;
    for (size_t i = 0; i < names.size(); ++i) {
        if (i) joined += ", ";
        joined += names[i];
    }
    return "Do not use the following packages, they do not exist: " + joined + ".";
}

inline std::string knowledge_question_system(Language lang) {
    return "You are a helpful assistant that suggests what a " +
           std::string(language_display(lang)) + " package could be used for.";
}

inline std::string knowledge_question_user(Language lang, const std::string& package_name,
                                           const std::string& description) {
    std::string l = language_display(lang);
    return "Generate a list of five questions that the " + l + " package " + package_name +
           " could help answer, given the following description: " + description +
           " Respond with only the questions, one per line.";
}

inline std::string knowledge_statement(const std::string& package_name,
                                       const std::string& topic) {
    return "Package " + package_name + " could answer questions about " + topic;
}

// Section label appended by retrieval augmentation; the original prompt
// always precedes it byte-exact.
inline constexpr const char* rag_section_label =
    "The following information about valid packages may be helpful:";

} // namespace prompts
} // namespace pkghall
