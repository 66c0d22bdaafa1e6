#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace firststep {

uint64_t fnv1a64(std::string_view data);
std::string to_hex(uint64_t v);

// splitmix64 finalizer: statelessly maps a key to a well-mixed 64-bit value.
uint64_t mix64(uint64_t x);

// Uniform double in [0, 1) from the top 53 bits of mix64(key).
double unit_from_key(uint64_t key);

bool is_word_char(unsigned char c);
char lower_ascii_char(char c);
std::string lower_ascii(std::string_view s);
std::string trim(std::string_view s);

// Trims and squeezes every internal whitespace run to a single space.
std::string collapse_whitespace(std::string_view s);

// Start offsets of case-insensitive whole-word matches. `needle` may contain
// spaces ("hold on"); word boundaries apply at both ends of the match.
std::vector<size_t> find_whole_word_ci(std::string_view haystack, std::string_view needle);

// Whole-word containment of `needle` where neighbours must not be
// alphanumeric. Used for standalone answer-value matching.
bool contains_standalone(std::string_view haystack, std::string_view needle);

size_t count_words(std::string_view text);

// Runs fn(i) for i in [0, n) on up to `workers` threads. Order of execution is
// unspecified; the first exception is rethrown after all workers join.
void parallel_for(size_t n, int workers, const std::function<void(size_t)>& fn);

// Serializes writes from parallel workers into index order: commit(i, fn)
// blocks until every index < i has committed, then runs fn. Every index must
// be committed exactly once (commit with an empty fn on failure paths) or
// later indices wait forever.
class OrderedCommitter {
 public:
  explicit OrderedCommitter(size_t start = 0) : next_(start) {}
  void commit(size_t index, const std::function<void()>& fn);

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  size_t next_;
};

std::string iso8601_now();

std::string read_file(const std::string& path);

}  // namespace firststep
