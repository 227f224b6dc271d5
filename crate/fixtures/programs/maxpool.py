import torch
x = torch.randn(1, 1, 8, 8, dtype=torch.float32)
pool = torch.nn.MaxPool2d(kernel_size=3, stride=2, padding=1)
y = pool(x)
print(y.shape)
