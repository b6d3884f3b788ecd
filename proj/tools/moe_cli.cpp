#include "moe/moe.hpp"
int main(){return 0;}
