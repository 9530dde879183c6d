#include "credlens/zeroshot.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <mutex>
#include <sstream>

#include "credlens/common/io.hpp"
#include "credlens/common/parallel.hpp"
#include "credlens/llm/prompt.hpp"
#include "credlens/llm/reply.hpp"

namespace credlens::zeroshot {

using nlohmann::json;

const std::string_view kDefaultTemplate =
    "You will see one social media post: its caption and its image. Taking the caption and image together, rate "
    "the impression the post would make on a typical reader of social media: does it come across as credible, as "
    "believable, and as accurate?\n\nCaption: {{caption}}\n\n{{instructions}}\n";

const std::string_view kReplyInstructions =
    "Rate each of the three items on a 7-point scale (1 = not at all, 7 = extremely). Reply with only a JSON "
    "object of the form {\"credible\": <1-7>, \"believable\": <1-7>, \"accurate\": <1-7>, \"reasoning\": "
    "\"<why the post does or does not appear credible>\"}.";

namespace {

constexpr std::string_view kFormatReminder =
    "Format reminder: reply with only a JSON object {\"credible\": <integer 1-7>, \"believable\": <integer 1-7>, "
    "\"accurate\": <integer 1-7>, \"reasoning\": \"<text>\"}.";

std::optional<long long> jsonInteger(const json& value) {
    if (value.is_number_integer()) return value.get<long long>();
    if (value.is_number_float()) {
        const double d = value.get<double>();
        if (d == static_cast<double>(static_cast<long long>(d))) return static_cast<long long>(d);
        return std::nullopt;
    }
    if (value.is_string()) {
        try {
            return parseInteger(value.get<std::string>());
        } catch (const Error&) {
            return std::nullopt;
        }
    }
    return std::nullopt;
}

int checkedRating(long long value, std::string_view field) {
    if (value < 1 || value > 7) {
        throw OutOfRangeError("rating '" + std::string(field) + "' = " + std::to_string(value) + " is outside [1,7]");
    }
    return static_cast<int>(value);
}

std::optional<ParsedRating> parseStructured(std::string_view text) {
    const auto object = llm::firstJsonObject(llm::stripFences(text));
    if (!object) return std::nullopt;
    json doc;
    try {
        doc = json::parse(*object);
    } catch (const json::parse_error&) {
        return std::nullopt;
    }
    json lowered = json::object();
    for (const auto& [key, value] : doc.items()) lowered[toLower(key)] = value;
    std::optional<long long> values[3];
    const char* fields[3] = {"credible", "believable", "accurate"};
    for (int i = 0; i < 3; ++i) {
        if (lowered.contains(fields[i])) values[i] = jsonInteger(lowered[fields[i]]);
        if (!values[i]) return std::nullopt;
    }
    ParsedRating out;
    out.triple.credible = checkedRating(*values[0], fields[0]);
    out.triple.believable = checkedRating(*values[1], fields[1]);
    out.triple.accurate = checkedRating(*values[2], fields[2]);
    if (lowered.contains("reasoning") && lowered["reasoning"].is_string()) {
        out.reasoning = trim(lowered["reasoning"].get<std::string>());
    }
    if (out.reasoning.empty()) throw ParseError("reply has ratings but no reasoning");
    return out;
}

bool isWordChar(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

/// First integer after `from` that is not glued to letters or a decimal point.
std::optional<long long> standaloneIntegerAfter(const std::string& text, std::size_t from) {
    std::size_t i = from;
    while (i < text.size()) {
        if (!std::isdigit(static_cast<unsigned char>(text[i]))) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
        const auto digitAt = [&](std::size_t k) { return k < text.size() && std::isdigit(static_cast<unsigned char>(text[k])); };
        const bool leftOk = i == 0 || (!isWordChar(text[i - 1]) && !(text[i - 1] == '.' && i >= 2 && digitAt(i - 2)));
        const bool rightOk = j == text.size() || (!isWordChar(text[j]) && !(text[j] == '.' && digitAt(j + 1)));
        if (leftOk && rightOk && j - i <= 9) return std::stoll(text.substr(i, j - i));
        i = j;
    }
    return std::nullopt;
}

ParsedRating parseKeywords(std::string_view text) {
    const std::string lowered = toLower(text);
    const char* keywords[3] = {"credible", "believable", "accurate"};
    long long values[3] = {0, 0, 0};
    int recovered = 0;
    for (int i = 0; i < 3; ++i) {
        const auto at = lowered.find(keywords[i]);
        if (at == std::string::npos) continue;
        const auto value = standaloneIntegerAfter(lowered, at + std::string_view(keywords[i]).size());
        if (!value) continue;
        values[i] = *value;
        ++recovered;
    }
    if (recovered < 3) {
        throw ParseError("could not recover three ratings from reply (found " + std::to_string(recovered) + ")");
    }
    ParsedRating out;
    out.triple.credible = checkedRating(values[0], keywords[0]);
    out.triple.believable = checkedRating(values[1], keywords[1]);
    out.triple.accurate = checkedRating(values[2], keywords[2]);
    const auto reasoningAt = lowered.find("reasoning");
    out.reasoning = trim(reasoningAt == std::string::npos ? text : text.substr(reasoningAt + 9));
    while (!out.reasoning.empty() && (out.reasoning.front() == ':' || out.reasoning.front() == '"')) {
        out.reasoning = trim(std::string_view(out.reasoning).substr(1));
    }
    if (out.reasoning.empty()) out.reasoning = trim(text);
    return out;
}

}  // namespace

ParsedRating parseRatingPayload(std::string_view text) {
    if (auto structured = parseStructured(text)) return *structured;
    return parseKeywords(text);
}

std::string renderRatingReply(const corpus::RatingTriple& triple, std::string_view reasoning) {
    json doc;
    doc["credible"] = triple.credible;
    doc["believable"] = triple.believable;
    doc["accurate"] = triple.accurate;
    doc["reasoning"] = std::string(reasoning);
    return doc.dump();
}

double combineTriple(const corpus::RatingTriple& t) {
    return (static_cast<double>(t.credible) + t.believable + t.accurate) / 3.0;
}

llm::MessageList repairMessages(const llm::MessageList& original, std::string_view priorReply,
                                std::string_view problem, std::string_view formatReminder) {
    llm::MessageList out = original;
    out.push_back({"assistant", {llm::Part::makeText(std::string(priorReply))}});
    out.push_back({"user", {llm::Part::makeText("Your previous reply could not be used (" + std::string(problem) +
                                                "). " + std::string(formatReminder))}});
    return out;
}

RatingOutcome rateZeroShot(const corpus::Post& post, const llm::ModelParams& params, llm::Gateway& gateway,
                           std::string_view templateText) {
    llm::MessageList messages = llm::renderPrompt(templateText, post, llm::Level::Post, kReplyInstructions);
    const llm::MessageList original = messages;
    std::string lastProblem;
    for (int attempt = 0; attempt <= params.maxRetries; ++attempt) {
        const auto exchange = gateway.complete(params, messages);
        try {
            const ParsedRating parsed = parseRatingPayload(exchange.responseText);
            ZeroShotResult result;
            result.postId = post.id;
            result.triple = parsed.triple;
            result.combined = combineTriple(parsed.triple);
            result.reasoning = parsed.reasoning;
            result.exchangeKey = exchange.cacheKey;
            return {std::move(result), std::nullopt};
        } catch (const ParseError& e) {
            lastProblem = e.what();
            messages = repairMessages(original, exchange.responseText, lastProblem, kFormatReminder);
        }
    }
    return {std::nullopt, MissingRating{post.id, lastProblem, params.maxRetries + 1}};
}

ZeroShotRun rateCorpus(const corpus::PostCollection& posts, const llm::ModelParams& params, llm::Gateway& gateway,
                       std::string_view templateText, std::size_t threads) {
    const auto& list = posts.posts();
    std::vector<RatingOutcome> outcomes(list.size());
    parallelFor(list.size(), threads,
                [&](std::size_t i) { outcomes[i] = rateZeroShot(list[i], params, gateway, templateText); });
    ZeroShotRun run;
    for (auto& outcome : outcomes) {
        if (outcome.result) run.results.push_back(std::move(*outcome.result));
        else run.missing.push_back(std::move(*outcome.missing));
    }
    std::sort(run.results.begin(), run.results.end(), [](const auto& a, const auto& b) { return a.postId < b.postId; });
    std::sort(run.missing.begin(), run.missing.end(), [](const auto& a, const auto& b) { return a.postId < b.postId; });
    return run;
}

std::string serializeResults(const std::vector<ZeroShotResult>& results) {
    std::string out;
    for (const auto& r : results) {
        json doc;
        doc["post_id"] = r.postId;
        doc["credible"] = r.triple.credible;
        doc["believable"] = r.triple.believable;
        doc["accurate"] = r.triple.accurate;
        doc["combined"] = r.combined;
        doc["reasoning"] = r.reasoning;
        doc["exchange_key"] = r.exchangeKey;
        out += doc.dump() + "\n";
    }
    return out;
}

std::vector<ZeroShotResult> parseResults(std::string_view text) {
    std::vector<ZeroShotResult> out;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineNumber = 0;
    while (std::getline(in, line)) {
        ++lineNumber;
        if (trim(line).empty()) continue;
        try {
            const json doc = json::parse(line);
            ZeroShotResult r;
            r.postId = doc.at("post_id").get<std::string>();
            r.triple.credible = doc.at("credible").get<int>();
            r.triple.believable = doc.at("believable").get<int>();
            r.triple.accurate = doc.at("accurate").get<int>();
            r.combined = doc.at("combined").get<double>();
            r.reasoning = doc.at("reasoning").get<std::string>();
            r.exchangeKey = doc.at("exchange_key").get<std::string>();
            out.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw ParseError("zero-shot results line " + std::to_string(lineNumber) + ": " + e.what());
        }
    }
    return out;
}

std::string serializeMissing(const std::vector<MissingRating>& missing) {
    std::string out;
    for (const auto& m : missing) {
        out += json{{"post_id", m.postId}, {"reason", m.reason}, {"attempts", m.attempts}}.dump() + "\n";
    }
    return out;
}

}  // namespace credlens::zeroshot
