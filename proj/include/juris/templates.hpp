#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace juris {

/// Text with `{name}` placeholders. `{{` and `}}` render as literal braces.
class PromptTemplate {
  public:
    /// Throws Error(TemplateInvalid) when a required placeholder is not present
    /// exactly once, an optional one appears twice, or any other placeholder appears.
    static PromptTemplate parse(std::string name, int version, std::string kind, std::string body,
                                std::vector<std::string> required, std::vector<std::string> optional = {});

    /// Throws Error(TemplateInvalid) if a placeholder present in the body has no value.
    [[nodiscard]] std::string render(const std::map<std::string, std::string, std::less<>>& values) const;

    [[nodiscard]] const std::string& name() const { return name_; }
    [[nodiscard]] int version() const { return version_; }
    [[nodiscard]] const std::string& kind() const { return kind_; }
    [[nodiscard]] const std::string& body() const { return body_; }
    [[nodiscard]] bool has_placeholder(std::string_view name) const;
    /// Literal text before the first placeholder.
    [[nodiscard]] std::string leading_text() const;

  private:
    struct Segment {
        bool placeholder = false;
        std::string text;
    };

    std::string name_;
    int version_ = 1;
    std::string kind_;
    std::string body_;
    std::vector<Segment> segments_;
};

/// Templates loaded from a manifest:
///   {"templates": [{"name", "version", "kind", "path", "required": [...], "optional": [...]}]}
/// Paths are relative to the manifest's directory.
class TemplateSet {
  public:
    static TemplateSet load(const std::filesystem::path& manifest);

    void add(PromptTemplate tmpl);
    /// Highest version of `name`. Throws Error(TemplateInvalid) if unknown.
    [[nodiscard]] const PromptTemplate& get(std::string_view name) const;
    [[nodiscard]] const PromptTemplate& get(std::string_view name, int version) const;
    [[nodiscard]] bool contains(std::string_view name) const;
    [[nodiscard]] std::vector<const PromptTemplate*> of_kind(std::string_view kind) const;

  private:
    std::map<std::string, std::map<int, PromptTemplate>, std::less<>> templates_;
};

/// Wraps a case description in the legal-syllogism instruction. Throws
/// Error(EmptyInput), Error(TemplateInvalid) if `wrapper` lacks {X}, and
/// Error(AlreadyWrapped) if `x` already contains the literal text of any of
/// `known_wrappers` (or of `wrapper` itself).
std::string apply_lcot(std::string_view x, const PromptTemplate& wrapper,
                       const std::vector<const PromptTemplate*>& known_wrappers = {});

/// apply_lcot with the named variant ("lcot.zh" or "lcot.en"), guarding against every lcot template in `set`.
std::string apply_lcot(std::string_view x, const TemplateSet& set, std::string_view variant = "lcot.zh");

}  // namespace juris
