#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>

#include "credlens/baseline.hpp"
#include "credlens/common/io.hpp"

namespace credlens::baseline {

namespace {

bool isAsciiLetter(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool isWordChar(char c) {
    const auto u = static_cast<unsigned char>(c);
    return std::isalnum(u) || c == '_' || u >= 0x80;
}

std::vector<std::string_view> whitespaceTokens(std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        const std::size_t start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i > start) out.push_back(text.substr(start, i - start));
    }
    return out;
}

/// Decodes UTF-8; malformed bytes become U+FFFD.
std::vector<char32_t> codePoints(std::string_view s) {
    std::vector<char32_t> out;
    for (std::size_t i = 0; i < s.size();) {
        const auto b = static_cast<unsigned char>(s[i]);
        int len = b < 0x80 ? 1 : (b >> 5) == 0x6 ? 2 : (b >> 4) == 0xE ? 3 : (b >> 3) == 0x1E ? 4 : 0;
        if (len == 0 || i + len > s.size()) {
            out.push_back(0xFFFD);
            ++i;
            continue;
        }
        char32_t cp = len == 1 ? b : b & (0x7F >> len);
        bool ok = true;
        for (int k = 1; k < len; ++k) {
            const auto c = static_cast<unsigned char>(s[i + k]);
            if ((c >> 6) != 0x2) ok = false;
            cp = (cp << 6) | (c & 0x3F);
        }
        out.push_back(ok ? cp : 0xFFFD);
        i += ok ? len : 1;
    }
    return out;
}

bool isRegionalIndicator(char32_t cp) { return cp >= 0x1F1E6 && cp <= 0x1F1FF; }

bool isMarkerToken(std::string_view token, char marker) {
    return token.size() >= 2 && token[0] == marker && isWordChar(token[1]);
}

// Hand-assigned valences; unlisted words are neutral. Bump kLexiconVersion
// on any edit.
constexpr std::array<std::pair<std::string_view, int>, 132> kLexicon = {{
    {"abuse", -3},      {"accurate", 2},     {"afraid", -2},     {"agree", 1},        {"alarming", -2},
    {"amazing", 3},     {"anger", -2},       {"angry", -2},      {"attack", -2},      {"awful", -3},
    {"bad", -2},        {"beautiful", 3},    {"benefit", 2},     {"best", 3},         {"betray", -3},
    {"better", 2},      {"blame", -2},       {"brave", 2},       {"breakthrough", 2}, {"brilliant", 3},
    {"calm", 1},        {"care", 1},         {"catastrophe", -3}, {"celebrate", 3},   {"chaos", -2},
    {"clean", 1},       {"collapse", -2},    {"confirmed", 1},   {"corrupt", -3},     {"crisis", -2},
    {"cure", 2},        {"danger", -2},      {"dangerous", -2},  {"dead", -3},        {"deadly", -3},
    {"death", -3},      {"deceive", -3},     {"destroy", -3},    {"disaster", -3},    {"disgusting", -3},
    {"doubt", -1},      {"effective", 2},    {"enjoy", 2},       {"evil", -3},        {"excellent", 3},
    {"exciting", 2},    {"fail", -2},        {"failure", -2},    {"fair", 1},         {"fake", -3},
    {"false", -2},      {"fear", -2},        {"fight", -1},      {"fraud", -3},       {"free", 1},
    {"fun", 2},         {"good", 2},         {"great", 3},       {"grief", -2},       {"happy", 3},
    {"harm", -2},       {"hate", -3},        {"healthy", 2},     {"help", 2},         {"hero", 2},
    {"honest", 2},      {"hope", 2},         {"horrible", -3},   {"hurt", -2},        {"terrible", -3},
    {"improve", 2},     {"informed", 1},     {"injury", -2},     {"innocent", 1},     {"inspiring", 3},
    {"kill", -3},       {"kind", 2},         {"lie", -3},        {"lies", -3},        {"love", 3},
    {"lucky", 2},       {"mess", -2},        {"miracle", 2},     {"mislead", -3},     {"misleading", -3},
    {"nice", 2},        {"outrage", -3},     {"pain", -2},       {"panic", -2},       {"peace", 2},
    {"poison", -3},     {"poor", -2},        {"positive", 2},    {"proud", 2},        {"proven", 2},
    {"protect", 2},     {"rage", -3},        {"reliable", 2},    {"rescue", 2},       {"risk", -1},
    {"sad", -2},        {"safe", 2},         {"scam", -3},       {"scandal", -3},     {"scary", -2},
    {"shame", -2},      {"shocking", -2},    {"sick", -2},       {"smile", 2},        {"strong", 1},
    {"success", 2},     {"suffer", -2},      {"support", 2},     {"terror", -3},      {"threat", -2},
    {"toxic", -3},      {"tragedy", -3},     {"tragic", -3},     {"true", 1},         {"trust", 2},
    {"truth", 2},       {"ugly", -2},        {"unsafe", -2},     {"victory", 3},      {"violence", -3},
    {"war", -2},        {"warning", -1},     {"welcome", 2},     {"win", 2},          {"wonderful", 3},
    {"worry", -2},      {"worse", -2},
}};

/// Lower-case ASCII letters of a token, with apostrophes dropped.
std::string letterCore(std::string_view token) {
    std::string out;
    for (char c : token)
        if (isAsciiLetter(c)) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return out;
}

bool isReadabilityWord(std::string_view token) {
    if (isUrlToken(token) || isMarkerToken(token, '@')) return false;
    return std::any_of(token.begin(), token.end(), isAsciiLetter);
}

}  // namespace

int lexiconValence(std::string_view word) {
    for (const auto& [w, v] : kLexicon)
        if (w == word) return v;
    return 0;
}

bool isEmojiCodePoint(char32_t cp) {
    if (cp >= 0x1F3FB && cp <= 0x1F3FF) return false;  // skin-tone modifiers
    return (cp >= 0x1F300 && cp <= 0x1FAFF) || (cp >= 0x2600 && cp <= 0x27BF) || (cp >= 0x1F1E6 && cp <= 0x1F1FF) ||
           (cp >= 0x2B50 && cp <= 0x2B55) || cp == 0x2B1B || cp == 0x2B1C || cp == 0x231A || cp == 0x231B ||
           cp == 0x23F0 || cp == 0x23F3;
}

bool isUrlToken(std::string_view token) {
    const std::string lower = toLower(token);
    for (std::string_view scheme : {"http://", "https://", "ftp://"}) {
        if (lower.starts_with(scheme) && lower.size() > scheme.size()) return true;
    }
    if (lower.starts_with("www.")) {
        const auto rest = std::string_view(lower).substr(4);
        const auto dot = rest.find('.');
        return dot != std::string_view::npos && dot > 0 && dot + 1 < rest.size();
    }
    return false;
}

std::size_t countSyllables(std::string_view word) {
    const std::string w = letterCore(word);
    if (w.empty()) return 0;
    const auto vowel = [](char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u' || c == 'y'; };
    std::size_t groups = 0;
    bool inGroup = false;
    for (char c : w) {
        const bool v = vowel(c);
        if (v && !inGroup) ++groups;
        inGroup = v;
    }
    // silent final e ("make"), but not consonant + "le" ("table")
    if (groups > 1 && w.back() == 'e' && !vowel(w[w.size() - 2])) {
        const bool consonantLe = w.size() >= 3 && w[w.size() - 2] == 'l' && !vowel(w[w.size() - 3]);
        if (!consonantLe) --groups;
    }
    return std::max<std::size_t>(groups, 1);
}

ReadabilityCounts readabilityCounts(std::string_view caption) {
    ReadabilityCounts c;
    std::string kept;
    for (const auto token : whitespaceTokens(caption)) {
        if (isUrlToken(token) || isMarkerToken(token, '@')) continue;
        if (isReadabilityWord(token)) {
            ++c.words;
            c.syllables += countSyllables(token);
        }
        kept.append(token);
        kept.push_back(' ');
    }
    bool segmentHasLetter = false;
    for (char ch : kept) {
        if (ch == '.' || ch == '?' || ch == '!') {
            if (segmentHasLetter) ++c.sentences;
            segmentHasLetter = false;
        } else if (isAsciiLetter(ch)) {
            segmentHasLetter = true;
        }
    }
    if (segmentHasLetter) ++c.sentences;
    if (c.words > 0) c.sentences = std::max<std::size_t>(c.sentences, 1);
    return c;
}

double fleschReadingEase(const ReadabilityCounts& c) {
    if (c.words == 0) return 0.0;
    const double w = static_cast<double>(c.words);
    return 206.835 - 1.015 * (w / static_cast<double>(c.sentences)) - 84.6 * (static_cast<double>(c.syllables) / w);
}

double fleschKincaidGrade(const ReadabilityCounts& c) {
    if (c.words == 0) return 0.0;
    const double w = static_cast<double>(c.words);
    return 0.39 * (w / static_cast<double>(c.sentences)) + 11.8 * (static_cast<double>(c.syllables) / w) - 15.59;
}

TextFeatures textFeatures(std::string_view caption) {
    TextFeatures f;
    int valence = 0;
    for (const auto token : whitespaceTokens(caption)) {
        ++f.wordCount;
        if (isMarkerToken(token, '#')) ++f.hashtagCount;
        if (isMarkerToken(token, '@')) ++f.mentionCount;
        if (isUrlToken(token)) {
            ++f.urlCount;
            continue;
        }
        const auto cps = codePoints(token);
        for (std::size_t i = 0; i < cps.size(); ++i) {
            if (!isEmojiCodePoint(cps[i])) continue;
            ++f.emojiCount;
            if (isRegionalIndicator(cps[i]) && i + 1 < cps.size() && isRegionalIndicator(cps[i + 1])) ++i;
        }
        valence += lexiconValence(letterCore(token));
    }
    const auto counts = readabilityCounts(caption);
    f.fleschReadingEase = fleschReadingEase(counts);
    f.fleschKincaidGrade = fleschKincaidGrade(counts);
    if (f.wordCount > 0) {
        f.sentiment = std::clamp(static_cast<double>(valence) / static_cast<double>(f.wordCount), -1.0, 1.0);
    }
    return f;
}

std::vector<std::pair<std::string, double>> TextFeatures::named() const {
    return {{"word_count", static_cast<double>(wordCount)},
            {"hashtag_count", static_cast<double>(hashtagCount)},
            {"mention_count", static_cast<double>(mentionCount)},
            {"emoji_count", static_cast<double>(emojiCount)},
            {"url_count", static_cast<double>(urlCount)},
            {"flesch_reading_ease", fleschReadingEase},
            {"flesch_kincaid_grade", fleschKincaidGrade},
            {"sentiment", sentiment}};
}

}  // namespace credlens::baseline
