#include "juris/templates.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "juris/error.hpp"
#include "juris/jsonl.hpp"
#include "juris/text.hpp"

namespace juris {

namespace {

bool is_ident_start(char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_'; }
bool is_ident_char(char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }

std::string label(const std::string& name, int version) { return name + " v" + std::to_string(version); }

}  // namespace

PromptTemplate PromptTemplate::parse(std::string name, int version, std::string kind, std::string body,
                                     std::vector<std::string> required, std::vector<std::string> optional)
{
    PromptTemplate t;
    t.name_ = std::move(name);
    t.version_ = version;
    t.kind_ = std::move(kind);
    t.body_ = std::move(body);
    const std::string where = label(t.name_, t.version_);
    if (t.name_.empty() || version < 1) throw Error(ErrorCode::TemplateInvalid, where + ": bad name or version");

    std::string literal;
    std::map<std::string, int> seen;
    const std::string& b = t.body_;
    for (std::size_t i = 0; i < b.size(); ++i) {
        char c = b[i];
        if (c == '{' && i + 1 < b.size() && b[i + 1] == '{') {
            literal += '{';
            ++i;
        } else if (c == '}' && i + 1 < b.size() && b[i + 1] == '}') {
            literal += '}';
            ++i;
        } else if (c == '{') {
            std::size_t j = i + 1;
            if (j >= b.size() || !is_ident_start(b[j])) throw Error(ErrorCode::TemplateInvalid, where + ": stray '{'");
            while (j < b.size() && is_ident_char(b[j])) ++j;
            if (j >= b.size() || b[j] != '}') throw Error(ErrorCode::TemplateInvalid, where + ": unterminated placeholder");
            std::string ph = b.substr(i + 1, j - i - 1);
            if (!literal.empty()) t.segments_.push_back({false, std::move(literal)});
            literal.clear();
            t.segments_.push_back({true, ph});
            ++seen[ph];
            i = j;
        } else if (c == '}') {
            throw Error(ErrorCode::TemplateInvalid, where + ": stray '}'");
        } else {
            literal += c;
        }
    }
    if (!literal.empty()) t.segments_.push_back({false, std::move(literal)});

    for (const auto& r : required) {
        if (seen[r] != 1) {
            throw Error(ErrorCode::TemplateInvalid,
                        where + ": placeholder {" + r + "} must appear exactly once, found " + std::to_string(seen[r]));
        }
    }
    for (const auto& [ph, count] : seen) {
        if (count == 0) continue;
        bool is_required = std::find(required.begin(), required.end(), ph) != required.end();
        bool is_optional = std::find(optional.begin(), optional.end(), ph) != optional.end();
        if (!is_required && !is_optional) throw Error(ErrorCode::TemplateInvalid, where + ": unknown placeholder {" + ph + "}");
        if (count > 1) throw Error(ErrorCode::TemplateInvalid, where + ": placeholder {" + ph + "} repeated");
    }
    return t;
}

std::string PromptTemplate::render(const std::map<std::string, std::string, std::less<>>& values) const
{
    std::string out;
    for (const auto& s : segments_) {
        if (!s.placeholder) {
            out += s.text;
            continue;
        }
        auto it = values.find(s.text);
        if (it == values.end()) {
            throw Error(ErrorCode::TemplateInvalid, label(name_, version_) + ": no value for {" + s.text + "}");
        }
        out += it->second;
    }
    return out;
}

bool PromptTemplate::has_placeholder(std::string_view name) const
{
    return std::any_of(segments_.begin(), segments_.end(),
                       [&](const Segment& s) { return s.placeholder && s.text == name; });
}

std::string PromptTemplate::leading_text() const
{
    if (segments_.empty() || segments_.front().placeholder) return {};
    return segments_.front().text;
}

TemplateSet TemplateSet::load(const std::filesystem::path& manifest)
{
    TemplateSet set;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(jsonl::read_file(manifest));
        for (const auto& row : j.at("templates")) {
            auto path = manifest.parent_path() / row.at("path").get<std::string>();
            std::string body;
            try {
                body = jsonl::read_file(path);
            } catch (const Error&) {
                throw Error(ErrorCode::TemplateInvalid, "cannot read template asset " + path.string());
            }
            set.add(PromptTemplate::parse(row.at("name").get<std::string>(), row.at("version").get<int>(),
                                          row.value("kind", std::string("prompt")), std::move(body),
                                          row.value("required", std::vector<std::string>{}),
                                          row.value("optional", std::vector<std::string>{})));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::TemplateInvalid, manifest.string() + ": " + e.what());
    }
    return set;
}

void TemplateSet::add(PromptTemplate tmpl)
{
    if (tmpl.kind() == "lcot" && !tmpl.has_placeholder("X")) {
        throw Error(ErrorCode::TemplateInvalid, tmpl.name() + ": wrapper lacks {X}");
    }
    auto& versions = templates_[tmpl.name()];
    int v = tmpl.version();
    versions.insert_or_assign(v, std::move(tmpl));
}

const PromptTemplate& TemplateSet::get(std::string_view name) const
{
    auto it = templates_.find(name);
    if (it == templates_.end() || it->second.empty()) {
        throw Error(ErrorCode::TemplateInvalid, "unknown template " + std::string(name));
    }
    return it->second.rbegin()->second;
}

const PromptTemplate& TemplateSet::get(std::string_view name, int version) const
{
    auto it = templates_.find(name);
    if (it != templates_.end()) {
        auto v = it->second.find(version);
        if (v != it->second.end()) return v->second;
    }
    throw Error(ErrorCode::TemplateInvalid, "unknown template " + label(std::string(name), version));
}

bool TemplateSet::contains(std::string_view name) const { return templates_.find(name) != templates_.end(); }

std::vector<const PromptTemplate*> TemplateSet::of_kind(std::string_view kind) const
{
    std::vector<const PromptTemplate*> out;
    for (const auto& [name, versions] : templates_) {
        for (const auto& [v, t] : versions) {
            if (t.kind() == kind) out.push_back(&t);
        }
    }
    return out;
}

std::string apply_lcot(std::string_view x, const PromptTemplate& wrapper,
                       const std::vector<const PromptTemplate*>& known_wrappers)
{
    if (!wrapper.has_placeholder("X")) throw Error(ErrorCode::TemplateInvalid, wrapper.name() + ": wrapper lacks {X}");
    if (text::is_blank(x)) throw Error(ErrorCode::EmptyInput, "case text is empty");

    auto check = [&](const PromptTemplate& t) {
        std::string sentinel{text::trim(t.leading_text())};
        if (!sentinel.empty() && x.find(sentinel) != std::string_view::npos) {
            throw Error(ErrorCode::AlreadyWrapped, "input already carries the " + t.name() + " wrapper");
        }
    };
    check(wrapper);
    for (const auto* t : known_wrappers) check(*t);
    return wrapper.render({{"X", std::string(x)}});
}

std::string apply_lcot(std::string_view x, const TemplateSet& set, std::string_view variant)
{
    return apply_lcot(x, set.get(variant), set.of_kind("lcot"));
}

}  // namespace juris
