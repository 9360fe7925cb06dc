#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace arabeval::unicode {

// Decodes UTF-8 into code points. Invalid bytes decode to U+FFFD one byte at
// a time, so the function is total.
std::u32string decode(std::string_view utf8);
std::string encode(std::u32string_view cps);
void append_utf8(std::string& out, char32_t cp);

bool is_whitespace(char32_t cp);
bool is_arabic(char32_t cp);
// Arabic script letters (excludes digits, punctuation, diacritics, tatweel).
bool is_arabic_letter(char32_t cp);
bool is_emoji(char32_t cp);
// Letters, digits, marks and '_' in any script.
bool is_word_char(char32_t cp);
// Unicode punctuation (includes Arabic comma and question mark).
bool is_punct(char32_t cp);
bool is_digit(char32_t cp);

inline constexpr char32_t kTatweel = 0x0640;

}  // namespace arabeval::unicode
