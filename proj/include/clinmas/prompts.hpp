#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace clinmas {

/// Named prompt templates with {placeholder} slots. Braces that do not name a
/// supplied placeholder are left alone, so templates may show JSON examples.
class PromptTemplates {
public:
    static constexpr std::string_view kVersion = "v1";

    /// The built-in template set.
    static PromptTemplates defaults();

    /// Built-ins overridden by every `<name>.txt` in `dir`. Unknown names are
    /// rejected so a typo cannot silently fall back to a default.
    static PromptTemplates load(const std::filesystem::path& dir);

    const std::string& get(std::string_view name) const;
    const std::map<std::string, std::string, std::less<>>& all() const noexcept { return templates_; }

    void write(const std::filesystem::path& dir) const;

    /// Hash over every (name, text) pair; recorded in run manifests.
    std::string hash() const;

private:
    std::map<std::string, std::string, std::less<>> templates_;
};

std::string render(std::string_view tmpl, const std::map<std::string, std::string, std::less<>>& values);

}  // namespace clinmas
