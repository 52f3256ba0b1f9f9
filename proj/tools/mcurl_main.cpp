#include <cstdio>

int main() {
  std::puts("mcurl: placeholder");
  return 0;
}
