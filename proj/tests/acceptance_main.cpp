// placeholder during bring-up
#include <cstdio>
int main() { std::printf("acceptance suite placeholder\n"); return 1; }
